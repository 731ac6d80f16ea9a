import * as tf from '@tensorflow/tfjs';

export class ModelError extends Error {}

export const CLASS_COUNT = 1000;

interface ModelSpec {
  inputSize: number;
  widths: number[];
}

// model id picks the architecture and seeds the weights, so the same id
// always produces bit-identical responses
const MODELS: Record<string, ModelSpec> = {
  'cam-1k': { inputSize: 32, widths: [16, 32, 64] },
  'cam-1k-wide': { inputSize: 32, widths: [24, 48, 96] },
};

export interface CamModel {
  id: string;
  inputSize: number;
  kernels: tf.Tensor4D[];
  biases: tf.Tensor1D[];
  gapWeights: tf.Tensor2D;
}

function fnv1a(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193) >>> 0;
  }
  return h >>> 0;
}

function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function normals(count: number, scale: number, rand: () => number): Float32Array {
  const out = new Float32Array(count);
  for (let i = 0; i < count; i += 2) {
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    const r = Math.sqrt(-2.0 * Math.log(u));
    out[i] = Math.fround(r * Math.cos(2.0 * Math.PI * v) * scale);
    if (i + 1 < count) out[i + 1] = Math.fround(r * Math.sin(2.0 * Math.PI * v) * scale);
  }
  return out;
}

export function loadModel(id: string): CamModel {
  const spec = MODELS[id];
  if (!spec) {
    throw new ModelError(`unknown model id '${id}' (known: ${Object.keys(MODELS).join(', ')})`);
  }
  const kernels: tf.Tensor4D[] = [];
  const biases: tf.Tensor1D[] = [];
  let fanIn = 3;
  spec.widths.forEach((width, layer) => {
    const rand = mulberry32(fnv1a(id) ^ (layer + 1));
    const scale = Math.sqrt(2.0 / (9 * fanIn));
    kernels.push(tf.tensor4d(normals(9 * fanIn * width, scale, rand), [3, 3, fanIn, width]));
    biases.push(tf.tensor1d(normals(width, 0.1, rand)));
    fanIn = width;
  });
  const randHead = mulberry32(fnv1a(id) ^ 0x5ca1ab1e);
  const last = spec.widths[spec.widths.length - 1];
  const gapWeights = tf.tensor2d(
    normals(last * CLASS_COUNT, Math.sqrt(1.0 / last), randHead),
    [last, CLASS_COUNT],
  );
  return { id, inputSize: spec.inputSize, kernels, biases, gapWeights };
}

// symmetric padding keeps a constant input constant through every conv,
// so flat crops yield flat response maps
function convBlock(x: tf.Tensor4D, kernel: tf.Tensor4D, bias: tf.Tensor1D): tf.Tensor4D {
  const padded = tf.mirrorPad(x, [[0, 0], [1, 1], [1, 1], [0, 0]], 'symmetric');
  return tf.relu(tf.add(tf.conv2d(padded, kernel, 1, 'valid'), bias)) as tf.Tensor4D;
}

// final conv features for a batch of crops already resized to the input size
export function convFeatures(model: CamModel, batch: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    let x = batch;
    model.kernels.forEach((kernel, layer) => {
      x = convBlock(x, kernel, model.biases[layer]);
      if (layer + 1 < model.kernels.length) {
        x = tf.maxPool(x, 2, 2, 'valid');
      }
    });
    return x as tf.Tensor4D;
  });
}

// class-activation responses: project features through the pooling head's
// weights, one response map per class
export function camResponses(model: CamModel, features: tf.Tensor4D): tf.Tensor4D {
  return tf.tidy(() => {
    const [n, h, w, c] = features.shape;
    const flat = tf.reshape(features, [n * h * w, c]);
    const projected = tf.matMul(flat, model.gapWeights);
    return tf.reshape(projected, [n, h, w, CLASS_COUNT]) as tf.Tensor4D;
  });
}

export function disposeModel(model: CamModel): void {
  model.kernels.forEach(k => k.dispose());
  model.biases.forEach(b => b.dispose());
  model.gapWeights.dispose();
}
