import * as tf from '@tensorflow/tfjs';
import { mkdirSync, writeFileSync } from 'fs';
import { join } from 'path';

import { FormatError, readPpm, readSlicePlan, writeFmap, Image, SlicePlan } from './formats';
import { camResponses, convFeatures, disposeModel, loadModel, CLASS_COUNT, ModelError } from './model';

export interface ExtractJob {
  image: string;
  plan: string;
  outDir: string;
  model: string;
  device: string;
}

export const DEFAULT_MODEL = 'cam-1k';

function toTensor(image: Image): tf.Tensor3D {
  return tf.tensor3d(image.data, [image.height, image.width, 3]);
}

function checkJob(image: Image, plan: SlicePlan, device: string): void {
  if (plan.rows !== image.height || plan.cols !== image.width) {
    throw new FormatError(
      `plan dims ${plan.rows}x${plan.cols} do not match image ${image.height}x${image.width}`,
    );
  }
  if (device !== 'cpu') {
    throw new ModelError(`unsupported device hint '${device}' (only cpu)`);
  }
}

// crop every slice, resize to the network input, run one batched forward
// pass, then resize each response map back to its slice resolution
export async function extract(job: ExtractJob): Promise<string[]> {
  await tf.setBackend('cpu');
  await tf.ready();

  const image = readPpm(job.image);
  const plan = readSlicePlan(job.plan);
  checkJob(image, plan, job.device);
  const model = loadModel(job.model);
  const inputSize = model.inputSize;
  mkdirSync(job.outDir, { recursive: true });

  const written: string[] = [];
  try {
    const responses = tf.tidy(() => {
      const full = toTensor(image);
      const crops = plan.slices.map(s => {
        const crop = tf.slice(full, [s.row, s.col, 0], [s.height, s.width, 3]);
        return tf.image.resizeBilinear(crop, [model.inputSize, model.inputSize]);
      });
      const batch = tf.stack(crops) as tf.Tensor4D;
      return camResponses(model, convFeatures(model, batch));
    });
    const perSlice = tf.unstack(responses);
    responses.dispose();
    for (const s of plan.slices) {
      const out = tf.tidy(() =>
        tf.image.resizeBilinear(perSlice[s.index] as tf.Tensor3D, [s.height, s.width]),
      );
      const data = (await out.data()) as Float32Array;
      out.dispose();
      const path = join(job.outDir, `slice_${String(s.index).padStart(2, '0')}.fmap`);
      writeFmap({ height: s.height, width: s.width, channels: CLASS_COUNT, data }, path);
      written.push(path);
    }
    perSlice.forEach(t => t.dispose());
  } finally {
    disposeModel(model);
  }

  const manifest = [
    'EXTRACT v1',
    `model ${job.model}`,
    'interpolation bilinear',
    `input ${inputSize}`,
    `classes ${CLASS_COUNT}`,
    `dims ${plan.rows} ${plan.cols}`,
    `slices ${plan.slices.length}`,
  ];
  const manifestPath = join(job.outDir, 'manifest.txt');
  writeFileSync(manifestPath, manifest.join('\n') + '\n');
  written.push(manifestPath);
  return written;
}
