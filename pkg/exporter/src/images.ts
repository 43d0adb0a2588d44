/**
 * Dataset walking and image decoding.
 *
 * A dataset is a folder of class subdirectories; each image's label is
 * its subdirectory name. Decoding covers PNG (via pngjs) and binary
 * PPM/PGM; anything else is an UnreadableImage the pipeline skips and
 * reports.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'
import { PNG } from 'pngjs'

export class UnreadableImage extends Error {}

export interface RgbImage {
  width: number
  height: number
  rgb: Uint8Array // height * width * 3, row-major
}

export interface DatasetEntry {
  file: string
  label: string
}

/** Deterministic walk: labels sorted, files sorted within each label. */
export function walkDataset(root: string): DatasetEntry[] {
  if (!fs.existsSync(root) || !fs.statSync(root).isDirectory()) {
    throw new Error(`${root}: not a directory`)
  }
  const labels = fs.readdirSync(root)
    .filter(name => fs.statSync(path.join(root, name)).isDirectory())
    .sort()
  const entries: DatasetEntry[] = []
  for (const label of labels) {
    const files = fs.readdirSync(path.join(root, label))
      .filter(name => fs.statSync(path.join(root, label, name)).isFile())
      .sort()
    for (const file of files) entries.push({ file: path.join(root, label, file), label })
  }
  return entries
}

export function decodeImage(file: string): RgbImage {
  const ext = path.extname(file).toLowerCase()
  let raw: Buffer
  try {
    raw = fs.readFileSync(file)
  } catch (err) {
    throw new UnreadableImage(`${file}: ${err}`)
  }
  if (ext === '.png') return decodePng(file, raw)
  if (ext === '.ppm' || ext === '.pgm') return decodePnm(file, raw)
  throw new UnreadableImage(`${file}: unsupported image type ${ext || '(none)'}`)
}

function decodePng(file: string, raw: Buffer): RgbImage {
  let png: PNG
  try {
    png = PNG.sync.read(raw)
  } catch (err) {
    throw new UnreadableImage(`${file}: ${err}`)
  }
  const rgb = new Uint8Array(png.width * png.height * 3)
  for (let i = 0; i < png.width * png.height; i++) {
    rgb[3 * i] = png.data[4 * i]
    rgb[3 * i + 1] = png.data[4 * i + 1]
    rgb[3 * i + 2] = png.data[4 * i + 2]
  }
  return { width: png.width, height: png.height, rgb }
}

/** Binary P6 (RGB) and P5 (gray), 8-bit, per the netpbm spec. */
function decodePnm(file: string, raw: Buffer): RgbImage {
  const magic = raw.subarray(0, 2).toString('ascii')
  if (magic !== 'P6' && magic !== 'P5') {
    throw new UnreadableImage(`${file}: not a binary PPM/PGM (magic ${JSON.stringify(magic)})`)
  }
  let pos = 2
  const fields: number[] = []
  while (fields.length < 3) {
    while (pos < raw.length && isSpace(raw[pos])) pos++
    if (pos < raw.length && raw[pos] === 0x23) { // comment
      while (pos < raw.length && raw[pos] !== 0x0a) pos++
      continue
    }
    let start = pos
    while (pos < raw.length && !isSpace(raw[pos])) pos++
    const token = raw.subarray(start, pos).toString('ascii')
    const value = Number(token)
    if (!Number.isInteger(value) || value < 0) {
      throw new UnreadableImage(`${file}: bad header token ${JSON.stringify(token)}`)
    }
    fields.push(value)
  }
  pos++ // single whitespace after maxval
  const [width, height, maxval] = fields
  if (maxval !== 255) throw new UnreadableImage(`${file}: only 8-bit PNM supported (maxval ${maxval})`)
  const channels = magic === 'P6' ? 3 : 1
  const needed = width * height * channels
  if (raw.length - pos < needed) {
    throw new UnreadableImage(`${file}: truncated pixel data (${raw.length - pos} of ${needed} bytes)`)
  }
  const rgb = new Uint8Array(width * height * 3)
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      rgb[3 * i] = raw[pos + 3 * i]
      rgb[3 * i + 1] = raw[pos + 3 * i + 1]
      rgb[3 * i + 2] = raw[pos + 3 * i + 2]
    } else {
      const g = raw[pos + i]
      rgb[3 * i] = g
      rgb[3 * i + 1] = g
      rgb[3 * i + 2] = g
    }
  }
  return { width, height, rgb }
}

function isSpace(byte: number): boolean {
  return byte === 0x20 || byte === 0x09 || byte === 0x0a || byte === 0x0d
}

/** Nearest-neighbor resample to size x size RGB; the fixed inference transform. */
export function resizeNearest(img: RgbImage, size: number): Uint8Array {
  const out = new Uint8Array(size * size * 3)
  for (let y = 0; y < size; y++) {
    const sy = Math.min(img.height - 1, Math.floor((y * img.height) / size))
    for (let x = 0; x < size; x++) {
      const sx = Math.min(img.width - 1, Math.floor((x * img.width) / size))
      const src = 3 * (sy * img.width + sx)
      const dst = 3 * (y * size + x)
      out[dst] = img.rgb[src]
      out[dst + 1] = img.rgb[src + 1]
      out[dst + 2] = img.rgb[src + 2]
    }
  }
  return out
}
