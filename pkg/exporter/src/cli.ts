#!/usr/bin/env node
/**
 * vismem-export: emit a vismem embedding pack from an image folder.
 *
 *   export --images DIR --out DIR [--encoder NAME] [--dims N] [--batch N]
 *   validate --pack DIR
 *
 * Exit codes: 0 success, 1 data/runtime error, 2 usage error.
 */

import { EncoderUnavailable, loadEncoder } from './encoder.js'
import { exportDataset } from './export.js'
import { validatePack } from './validate.js'

interface Flags {
  [key: string]: string
}

function parseFlags(argv: string[]): Flags {
  const flags: Flags = {}
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i]
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new UsageError(`expected --flag value pairs, got ${JSON.stringify(argv.slice(i))}`)
    }
    flags[key.slice(2)] = argv[i + 1]
  }
  return flags
}

class UsageError extends Error {}

const USAGE = `usage:
  vismem-export export --images DIR --out DIR [--encoder NAME] [--dims N] [--batch N]
  vismem-export validate --pack DIR

encoders: patch-projection (built-in, deterministic), tfjs-mobilenet (optional)`

async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv
  if (!command) {
    console.error(USAGE)
    return 2
  }
  let flags: Flags
  try {
    flags = parseFlags(rest)
  } catch (err) {
    console.error(`vismem-export: ${(err as Error).message}\n${USAGE}`)
    return 2
  }

  if (command === 'export') {
    if (!flags.images || !flags.out) {
      console.error(`vismem-export: export requires --images and --out\n${USAGE}`)
      return 2
    }
    const encoder = await loadEncoder(
      flags.encoder ?? 'patch-projection',
      flags.dims ? Number(flags.dims) : undefined,
    )
    const manifest = exportDataset(flags.images, encoder, flags.out, {
      batchSize: flags.batch ? Number(flags.batch) : undefined,
    })
    console.log(JSON.stringify(manifest, null, 2))
    return 0
  }

  if (command === 'validate') {
    if (!flags.pack) {
      console.error(`vismem-export: validate requires --pack\n${USAGE}`)
      return 2
    }
    const report = validatePack(flags.pack)
    console.log(JSON.stringify(report, null, 2))
    return report.ok ? 0 : 1
  }

  console.error(`vismem-export: unknown command ${JSON.stringify(command)}\n${USAGE}`)
  return 2
}

main(process.argv.slice(2))
  .then(code => process.exit(code))
  .catch(err => {
    if (err instanceof EncoderUnavailable) {
      console.error(`vismem-export: encoder unavailable: ${err.message}`)
    } else {
      console.error(`vismem-export: error: ${err instanceof Error ? err.message : err}`)
    }
    process.exit(1)
  })
