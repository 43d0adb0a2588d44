/** Format-level pack validation: returns issues instead of throwing. */

import * as fs from 'node:fs'
import * as path from 'node:path'

import { FormatError, readPack } from './pack.js'

export interface ValidationReport {
  ok: boolean
  issues: string[]
  count?: number
  dims?: number
}

export function validatePack(dir: string): ValidationReport {
  const issues: string[] = []
  let contents
  try {
    contents = readPack(dir)
  } catch (err) {
    if (err instanceof FormatError) return { ok: false, issues: [err.message] }
    throw err
  }

  const { vectors, meta, dims, count } = contents
  for (let i = 0; i < vectors.length; i++) {
    if (!Number.isFinite(vectors[i])) {
      issues.push(
        `vectors.bin: non-finite component at row ${Math.floor(i / dims)}, ` +
        `byte offset ${20 + 4 * i}`,
      )
      break
    }
  }
  const ids = new Set(meta.map(r => r.id))
  if (ids.size !== meta.length) issues.push('meta.jsonl: duplicate entry ids')

  const manifestPath = path.join(dir, 'manifest.json')
  if (fs.existsSync(manifestPath)) {
    try {
      const manifest = JSON.parse(fs.readFileSync(manifestPath, 'utf-8'))
      if (manifest.count !== undefined && manifest.count !== count) {
        issues.push(`manifest.json: count ${manifest.count} != ${count} rows`)
      }
      if (manifest.dims !== undefined && manifest.dims !== dims) {
        issues.push(`manifest.json: dims ${manifest.dims} != ${dims}`)
      }
    } catch (err) {
      issues.push(`manifest.json: invalid JSON (${err})`)
    }
  }
  return { ok: issues.length === 0, issues, count, dims }
}
