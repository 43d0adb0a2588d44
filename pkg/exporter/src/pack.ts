/**
 * Embedding-pack binary format, bit-compatible with the engine's loader.
 *
 * vectors.bin   magic "VMEM", u32 LE version (=1), u32 LE dims,
 *               u64 LE count, then count*dims float32 LE, row-major.
 * meta.jsonl    one JSON record per row, in row order.
 * manifest.json {version, count, dims, label_count, created_at, ...}.
 */

import { createHash } from 'node:crypto'
import * as fs from 'node:fs'
import * as path from 'node:path'

export const MAGIC = Buffer.from('VMEM', 'ascii')
export const FORMAT_VERSION = 1
export const HEADER_SIZE = 4 + 4 + 4 + 8

export class FormatError extends Error {}

export interface MetaRecord {
  id: number
  label_name: string
  taxonomy_path?: string[]
  v?: number
  gamma?: number
}

export function packHeader(dims: number, count: number): Buffer {
  const header = Buffer.alloc(HEADER_SIZE)
  MAGIC.copy(header, 0)
  header.writeUInt32LE(FORMAT_VERSION, 4)
  header.writeUInt32LE(dims, 8)
  header.writeBigUInt64LE(BigInt(count), 12)
  return header
}

/** Incremental pack writer: rows stream in, meta rows stay aligned. */
export class PackWriter {
  readonly dims: number
  private readonly dir: string
  private readonly vectorsPath: string
  private readonly rows: Buffer[] = []
  private readonly meta: MetaRecord[] = []

  constructor(dir: string, dims: number) {
    if (dims < 1) throw new FormatError(`dims must be >= 1, got ${dims}`)
    this.dir = dir
    this.dims = dims
    this.vectorsPath = path.join(dir, 'vectors.bin')
    fs.mkdirSync(dir, { recursive: true })
  }

  addRow(vector: Float32Array | number[], record: MetaRecord): void {
    if (vector.length !== this.dims) {
      throw new FormatError(`row ${this.meta.length} has ${vector.length} dims, expected ${this.dims}`)
    }
    const buf = Buffer.alloc(4 * this.dims)
    for (let i = 0; i < this.dims; i++) buf.writeFloatLE(vector[i], 4 * i)
    this.rows.push(buf)
    this.meta.push(record)
  }

  get count(): number {
    return this.meta.length
  }

  /** Write all three files; returns the sha256 checksum of vectors.bin.
   * The checksum is computed before the manifest is written, so callers
   * may ask for it to be recorded there via includeChecksum. */
  finish(extraManifest: Record<string, unknown> = {}, includeChecksum = false): string {
    const body = Buffer.concat([packHeader(this.dims, this.count), ...this.rows])
    fs.writeFileSync(this.vectorsPath, body)

    const metaLines = this.meta.map(r => JSON.stringify(sortedKeys(r))).join('\n')
    fs.writeFileSync(path.join(this.dir, 'meta.jsonl'), metaLines + (this.meta.length ? '\n' : ''))

    const checksum = createHash('sha256').update(body).digest('hex')
    const manifest: Record<string, unknown> = {
      version: FORMAT_VERSION,
      count: this.count,
      dims: this.dims,
      label_count: new Set(this.meta.map(r => r.label_name)).size,
      created_at: createdAtStamp(),
      ...extraManifest,
    }
    if (includeChecksum) manifest.checksum_sha256 = checksum
    fs.writeFileSync(
      path.join(this.dir, 'manifest.json'),
      JSON.stringify(sortedKeys(manifest), null, 2) + '\n',
    )
    return checksum
  }
}

export function createdAtStamp(): string {
  const epoch = process.env.SOURCE_DATE_EPOCH
  const t = epoch ? new Date(Number(epoch) * 1000) : new Date()
  return t.toISOString().replace(/\.\d{3}Z$/, 'Z')
}

function sortedKeys(obj: object): Record<string, unknown> {
  const rec = obj as Record<string, unknown>
  const out: Record<string, unknown> = {}
  for (const key of Object.keys(rec).sort()) out[key] = rec[key]
  return out
}

export interface PackContents {
  dims: number
  count: number
  vectors: Float32Array // row-major, count*dims
  meta: MetaRecord[]
}

/** Strict reader used by validation and tests; throws FormatError with byte offsets. */
export function readPack(dir: string): PackContents {
  const vecPath = path.join(dir, 'vectors.bin')
  if (!fs.existsSync(vecPath)) throw new FormatError(`${vecPath}: missing`)
  const raw = fs.readFileSync(vecPath)
  if (raw.length < HEADER_SIZE) {
    throw new FormatError(`${vecPath}: truncated header (${raw.length} bytes, need ${HEADER_SIZE})`)
  }
  if (!raw.subarray(0, 4).equals(MAGIC)) {
    throw new FormatError(`${vecPath}: bad magic ${JSON.stringify(raw.subarray(0, 4).toString('latin1'))} at offset 0`)
  }
  const version = raw.readUInt32LE(4)
  if (version !== FORMAT_VERSION) {
    throw new FormatError(`${vecPath}: unsupported format version ${version} at offset 4`)
  }
  const dims = raw.readUInt32LE(8)
  if (dims < 1) throw new FormatError(`${vecPath}: dims must be >= 1, got ${dims}`)
  const count = Number(raw.readBigUInt64LE(12))
  const expected = HEADER_SIZE + 4 * dims * count
  if (raw.length < expected) {
    throw new FormatError(`${vecPath}: truncated at offset ${raw.length} (expected ${expected} bytes for ${count} rows x ${dims} dims)`)
  }
  if (raw.length > expected) {
    throw new FormatError(`${vecPath}: ${raw.length - expected} trailing bytes after offset ${expected}`)
  }
  const vectors = new Float32Array(count * dims)
  for (let i = 0; i < vectors.length; i++) vectors[i] = raw.readFloatLE(HEADER_SIZE + 4 * i)

  const metaPath = path.join(dir, 'meta.jsonl')
  if (!fs.existsSync(metaPath)) throw new FormatError(`${metaPath}: missing`)
  const lines = fs.readFileSync(metaPath, 'utf-8').split('\n').filter(l => l.trim().length > 0)
  if (lines.length !== count) {
    throw new FormatError(`${metaPath}: ${lines.length} meta rows but vectors.bin header says ${count}`)
  }
  const meta: MetaRecord[] = lines.map((line, i) => {
    let rec: MetaRecord
    try {
      rec = JSON.parse(line)
    } catch (err) {
      throw new FormatError(`${metaPath}: row ${i}: invalid JSON (${err})`)
    }
    if (typeof rec.id !== 'number' || typeof rec.label_name !== 'string') {
      throw new FormatError(`${metaPath}: row ${i}: missing or invalid id/label_name`)
    }
    return rec
  })
  return { dims, count, vectors, meta }
}
