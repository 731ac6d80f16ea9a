import { readFileSync, writeFileSync } from 'fs';

export class FormatError extends Error {}

export const FMAP_MAGIC = 'FMAP1';
// header: 5 magic bytes then height, width, channels as LE uint32
const FMAP_HEADER_BYTES = 17;

export interface FeatureMap {
  height: number;
  width: number;
  channels: number;
  data: Float32Array; // row-major, channel last
}

export function writeFmap(map: FeatureMap, path: string): void {
  if (map.data.length !== map.height * map.width * map.channels) {
    throw new FormatError(`payload length ${map.data.length} does not match dims`);
  }
  for (let i = 0; i < map.data.length; i++) {
    if (!Number.isFinite(map.data[i])) {
      throw new FormatError('feature map contains NaN or Inf');
    }
  }
  const header = Buffer.alloc(FMAP_HEADER_BYTES);
  header.write(FMAP_MAGIC, 0, 'ascii');
  header.writeUInt32LE(map.height, 5);
  header.writeUInt32LE(map.width, 9);
  header.writeUInt32LE(map.channels, 13);
  const payload = Buffer.from(map.data.buffer, map.data.byteOffset, map.data.byteLength);
  writeFileSync(path, Buffer.concat([header, payload]));
}

export function readFmap(path: string): FeatureMap {
  const raw = readFileSync(path);
  if (raw.length < FMAP_HEADER_BYTES || raw.toString('ascii', 0, 5) !== FMAP_MAGIC) {
    throw new FormatError(`${path}: not an FMAP1 file`);
  }
  const height = raw.readUInt32LE(5);
  const width = raw.readUInt32LE(9);
  const channels = raw.readUInt32LE(13);
  const expected = FMAP_HEADER_BYTES + 4 * height * width * channels;
  if (raw.length !== expected) {
    throw new FormatError(`${path}: expected ${expected} bytes, got ${raw.length}`);
  }
  const body = raw.subarray(FMAP_HEADER_BYTES);
  const data = new Float32Array(body.buffer.slice(body.byteOffset, body.byteOffset + body.byteLength));
  return { height, width, channels, data };
}

export interface Image {
  height: number;
  width: number;
  data: Float32Array; // rgb in [0, 1], row-major
}

export function readPpm(path: string): Image {
  const raw = readFileSync(path);
  if (raw.toString('ascii', 0, 2) !== 'P6') {
    throw new FormatError(`${path}: not a P6 PPM`);
  }
  // width, height, maxval as whitespace-separated tokens, '#' comments allowed
  const tokens: number[] = [];
  let pos = 2;
  let tok = '';
  while (tokens.length < 3 && pos < raw.length) {
    const ch = raw[pos];
    if (ch === 0x23) {
      while (pos < raw.length && raw[pos] !== 0x0a && raw[pos] !== 0x0d) pos++;
    } else if (ch === 0x20 || ch === 0x09 || ch === 0x0a || ch === 0x0d) {
      if (tok) {
        tokens.push(parseInt(tok, 10));
        tok = '';
      }
    } else {
      tok += String.fromCharCode(ch);
    }
    pos++;
  }
  if (tokens.length < 3) throw new FormatError(`${path}: truncated PPM header`);
  const [width, height, maxval] = tokens;
  if (maxval !== 255) throw new FormatError(`${path}: only maxval 255 supported, got ${maxval}`);
  const expected = width * height * 3;
  const body = raw.subarray(pos);
  if (body.length !== expected) {
    throw new FormatError(`${path}: expected ${expected} payload bytes, got ${body.length}`);
  }
  const data = new Float32Array(expected);
  for (let i = 0; i < expected; i++) data[i] = body[i] / 255.0;
  return { height, width, data };
}

export interface Slice {
  index: number;
  row: number;
  col: number;
  height: number;
  width: number;
}

export interface SlicePlan {
  rows: number;
  cols: number;
  slices: Slice[];
}

export function readSlicePlan(path: string): SlicePlan {
  const lines = readFileSync(path, 'utf-8').split(/\r?\n/);
  if (lines[0]?.trim() !== 'SLICEPLAN v1') {
    throw new FormatError(`${path}: missing SLICEPLAN v1 header`);
  }
  if (!lines[1]?.startsWith('dims ')) {
    throw new FormatError(`${path}: missing dims line`);
  }
  const [, rowsStr, colsStr] = lines[1].split(/\s+/);
  const plan: SlicePlan = { rows: parseInt(rowsStr, 10), cols: parseInt(colsStr, 10), slices: [] };
  for (const line of lines.slice(2)) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const parts = trimmed.split(/\s+/);
    if (parts.length !== 7) throw new FormatError(`${path}: bad slice line '${trimmed}'`);
    const [index, row, col, height, width] = parts.slice(0, 5).map(p => parseInt(p, 10));
    plan.slices.push({ index, row, col, height, width });
  }
  if (plan.slices.length !== 15) {
    throw new FormatError(`${path}: expected 15 slices, got ${plan.slices.length}`);
  }
  return plan;
}
