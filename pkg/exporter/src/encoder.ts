/**
 * Image encoders. The built-in patch-projection encoder is fully
 * deterministic and dependency-free: fixed nearest-neighbor resize,
 * channel standardization, then a seeded Gaussian random projection.
 * It stands in for heavyweight pretrained encoders so the export
 * pipeline and pack format can be exercised anywhere; a tfjs-backed
 * encoder can be plugged in where model weights are downloadable.
 *
 * Vectors are emitted unnormalized; the engine normalizes at ingest.
 */

import { RgbImage, resizeNearest } from './images.js'

export class EncoderUnavailable extends Error {}

export interface Encoder {
  name: string
  dims: number
  encode(img: RgbImage): Float32Array
}

/** sfc32: tiny deterministic PRNG, stable across platforms. */
function sfc32(a: number, b: number, c: number, d: number): () => number {
  return () => {
    a |= 0; b |= 0; c |= 0; d |= 0
    const t = (a + b | 0) + d | 0
    d = d + 1 | 0
    a = b ^ b >>> 9
    b = c + (c << 3) | 0
    c = c << 21 | c >>> 11
    c = c + t | 0
    return (t >>> 0) / 4294967296
  }
}

function seededGaussians(count: number, seed: number): Float64Array {
  const rand = sfc32(0x9e3779b9, seed ^ 0xdeadbeef, seed, 0x85ebca6b)
  for (let i = 0; i < 12; i++) rand()
  const out = new Float64Array(count)
  for (let i = 0; i < count; i += 2) {
    // Box-Muller; u clamped away from 0
    const u = Math.max(rand(), 1e-12)
    const v = rand()
    const r = Math.sqrt(-2 * Math.log(u))
    out[i] = r * Math.cos(2 * Math.PI * v)
    if (i + 1 < count) out[i + 1] = r * Math.sin(2 * Math.PI * v)
  }
  return out
}

export class PatchProjectionEncoder implements Encoder {
  readonly name: string
  readonly dims: number
  readonly patch: number
  private readonly projection: Float64Array // dims x (patch*patch*3)

  constructor(dims = 64, patch = 16, seed = 7) {
    this.dims = dims
    this.patch = patch
    this.name = `patch${patch}-proj${dims}`
    this.projection = seededGaussians(dims * patch * patch * 3, seed)
  }

  encode(img: RgbImage): Float32Array {
    const pixels = resizeNearest(img, this.patch)
    const n = pixels.length
    // standardize so the projection sees zero-mean unit-ish inputs
    let mean = 0
    for (let i = 0; i < n; i++) mean += pixels[i]
    mean /= n
    let variance = 0
    for (let i = 0; i < n; i++) variance += (pixels[i] - mean) ** 2
    const std = Math.sqrt(variance / n) || 1
    const out = new Float32Array(this.dims)
    for (let d = 0; d < this.dims; d++) {
      let acc = 0
      const base = d * n
      for (let i = 0; i < n; i++) acc += this.projection[base + i] * ((pixels[i] - mean) / std)
      out[d] = acc
    }
    return out
  }
}

/**
 * Adapter stub for a tfjs mobilenet encoder. Resolving it requires the
 * optional @tensorflow/tfjs packages plus network access for weights,
 * so construction throws EncoderUnavailable when either is missing.
 */
export async function loadTfjsMobilenet(): Promise<Encoder> {
  let tf: any, mobilenet: any
  try {
    tf = await import('@tensorflow/tfjs' as string)
    mobilenet = await import('@tensorflow-models/mobilenet' as string)
  } catch (err) {
    throw new EncoderUnavailable(`tfjs-mobilenet: packages not installed (${err})`)
  }
  let model: any
  try {
    model = await mobilenet.load({ version: 2, alpha: 1.0 })
  } catch (err) {
    throw new EncoderUnavailable(`tfjs-mobilenet: model weights unreachable (${err})`)
  }
  return {
    name: 'tfjs-mobilenet-v2',
    dims: 1280,
    encode(img: RgbImage): Float32Array {
      const input = tf.tensor3d(Array.from(img.rgb), [img.height, img.width, 3], 'int32')
      try {
        const activation = model.infer(input, true)
        return Float32Array.from(activation.dataSync())
      } finally {
        input.dispose()
      }
    },
  }
}

export async function loadEncoder(name: string, dims?: number): Promise<Encoder> {
  if (name === 'patch-projection' || name.startsWith('patch')) {
    return new PatchProjectionEncoder(dims ?? 64)
  }
  if (name === 'tfjs-mobilenet') {
    return loadTfjsMobilenet()
  }
  throw new EncoderUnavailable(`unknown encoder ${JSON.stringify(name)}`)
}
