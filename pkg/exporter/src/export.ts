/**
 * Export pipeline: walk a class-per-folder image dataset, encode each
 * image, and emit a pack the engine can build a memory from. Output
 * rows follow the deterministic walk order; unreadable images are
 * skipped and listed in the manifest's failures.
 */

import { Encoder } from './encoder.js'
import { decodeImage, UnreadableImage, walkDataset } from './images.js'
import { PackWriter } from './pack.js'

export interface ExportManifest {
  encoder: string
  dims: number
  image_count: number
  failures: string[]
  checksum_sha256: string
}

export interface ExportOptions {
  batchSize?: number
  onProgress?: (done: number, total: number) => void
}

export function exportDataset(
  imageRoot: string,
  encoder: Encoder,
  outDir: string,
  options: ExportOptions = {},
): ExportManifest {
  const entries = walkDataset(imageRoot)
  if (entries.length === 0) throw new Error(`${imageRoot}: no images under class subdirectories`)
  const batchSize = options.batchSize ?? 32

  const writer = new PackWriter(outDir, encoder.dims)
  const failures: string[] = []
  let nextId = 0
  for (let start = 0; start < entries.length; start += batchSize) {
    for (const entry of entries.slice(start, start + batchSize)) {
      let vector: Float32Array
      try {
        vector = encoder.encode(decodeImage(entry.file))
      } catch (err) {
        if (err instanceof UnreadableImage) {
          failures.push(err.message)
          continue
        }
        throw err
      }
      writer.addRow(vector, { id: nextId++, label_name: entry.label })
    }
    options.onProgress?.(Math.min(start + batchSize, entries.length), entries.length)
  }
  if (writer.count === 0) throw new Error(`${imageRoot}: every image failed to decode`)

  const checksum = writer.finish(
    {
      encoder: encoder.name,
      transform: 'nearest-resize + per-image standardization',
      failures,
    },
    true,
  )
  return {
    encoder: encoder.name,
    dims: encoder.dims,
    image_count: writer.count,
    failures,
    checksum_sha256: checksum,
  }
}
