import { describe, expect, it } from 'vitest';

import { parseArgs, UsageError } from '../src/cli';

describe('argument parsing', () => {
  it('fills defaults for model and device', () => {
    const job = parseArgs(['extract', '--image', 'a.ppm', '--plan', 'p.txt', '--out', 'd']);
    expect(job).toEqual({ image: 'a.ppm', plan: 'p.txt', outDir: 'd', model: 'cam-1k', device: 'cpu' });
  });

  it('accepts explicit model and device', () => {
    const job = parseArgs([
      'extract', '--image', 'a.ppm', '--plan', 'p.txt', '--out', 'd', '--model', 'cam-1k-wide', '--device', 'cpu',
    ]);
    expect(job.model).toBe('cam-1k-wide');
  });

  it('rejects unknown commands, unknown flags, and missing values', () => {
    expect(() => parseArgs(['transmogrify'])).toThrow(UsageError);
    expect(() => parseArgs(['extract', '--image', 'a.ppm', '--frobnicate', 'x'])).toThrow(UsageError);
    expect(() => parseArgs(['extract', '--image'])).toThrow(UsageError);
    expect(() => parseArgs(['extract', '--image', 'a.ppm', '--plan', 'p.txt'])).toThrow(UsageError);
  });
});
