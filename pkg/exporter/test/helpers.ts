import * as fs from 'node:fs'
import * as path from 'node:path'
import { PNG } from 'pngjs'

/** Tiny solid-color PNG with a per-pixel gradient so images differ. */
export function writePng(file: string, width: number, height: number,
                         base: [number, number, number]): void {
  const png = new PNG({ width, height })
  for (let i = 0; i < width * height; i++) {
    png.data[4 * i] = (base[0] + i) % 256
    png.data[4 * i + 1] = (base[1] + 2 * i) % 256
    png.data[4 * i + 2] = (base[2] + 3 * i) % 256
    png.data[4 * i + 3] = 255
  }
  fs.mkdirSync(path.dirname(file), { recursive: true })
  fs.writeFileSync(file, PNG.sync.write(png))
}

export function writePpm(file: string, width: number, height: number,
                         base: [number, number, number]): void {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, 'ascii')
  const pixels = Buffer.alloc(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    pixels[3 * i] = (base[0] + i) % 256
    pixels[3 * i + 1] = (base[1] + 2 * i) % 256
    pixels[3 * i + 2] = (base[2] + 3 * i) % 256
  }
  fs.mkdirSync(path.dirname(file), { recursive: true })
  fs.writeFileSync(file, Buffer.concat([header, pixels]))
}

/** 3 classes x 2 images: the six-image conformance fixture. */
export function writeSixImageDataset(root: string): void {
  writePng(path.join(root, 'cat', 'a.png'), 20, 14, [200, 30, 30])
  writePng(path.join(root, 'cat', 'b.png'), 16, 16, [180, 60, 40])
  writePpm(path.join(root, 'dog', 'a.ppm'), 12, 18, [30, 200, 30])
  writePng(path.join(root, 'dog', 'b.png'), 22, 10, [60, 180, 40])
  writePpm(path.join(root, 'fox', 'a.ppm'), 15, 15, [30, 30, 200])
  writePng(path.join(root, 'fox', 'b.png'), 18, 12, [60, 40, 180])
}
