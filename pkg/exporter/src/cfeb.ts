/**
 * CFEB binary serialization (little-endian, version 1).
 *
 * Layout:
 *   magic "CFEB" | version u32 | d u32 | nTrain u32 | nTest u32 | C u32
 *   train features (nTrain*d float32, row-major) | train labels (nTrain u32)
 *   test features  (nTest*d float32)             | test labels  (nTest u32)
 *   text features  (C*d float32)
 *   C class-name records: u16 byte length + UTF-8 bytes
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

export const CFEB_MAGIC = "CFEB";
export const CFEB_VERSION = 1;

export interface CfebDataset {
  dim: number;
  trainFeatures: Float32Array; // nTrain * dim, rows L2-normalized
  trainLabels: Uint32Array;
  testFeatures: Float32Array; // nTest * dim
  testLabels: Uint32Array;
  textFeatures: Float32Array; // numClasses * dim
  classNames: string[];
}

function rows(name: string, features: Float32Array, dim: number): number {
  if (features.length % dim !== 0) {
    throw new Error(`${name} length ${features.length} is not a multiple of dim ${dim}`);
  }
  return features.length / dim;
}

export function validateDataset(ds: CfebDataset): void {
  if (ds.dim < 1) throw new Error(`dim must be >= 1, got ${ds.dim}`);
  const c = ds.classNames.length;
  if (c < 2) throw new Error(`need at least 2 classes, got ${c}`);
  if (rows("textFeatures", ds.textFeatures, ds.dim) !== c) {
    throw new Error("textFeatures row count must equal the class count");
  }
  const nTrain = rows("trainFeatures", ds.trainFeatures, ds.dim);
  const nTest = rows("testFeatures", ds.testFeatures, ds.dim);
  if (ds.trainLabels.length !== nTrain || ds.testLabels.length !== nTest) {
    throw new Error("label counts must match feature row counts");
  }
  for (const label of ds.trainLabels) {
    if (label >= c) throw new Error(`train label ${label} out of range [0, ${c})`);
  }
  for (const label of ds.testLabels) {
    if (label >= c) throw new Error(`test label ${label} out of range [0, ${c})`);
  }
}

function floatBlock(arr: Float32Array): Buffer {
  const buf = Buffer.alloc(arr.length * 4);
  for (let i = 0; i < arr.length; i++) buf.writeFloatLE(arr[i], i * 4);
  return buf;
}

function labelBlock(arr: Uint32Array): Buffer {
  const buf = Buffer.alloc(arr.length * 4);
  for (let i = 0; i < arr.length; i++) buf.writeUInt32LE(arr[i], i * 4);
  return buf;
}

export function encodeCfeb(ds: CfebDataset): Buffer {
  validateDataset(ds);
  const header = Buffer.alloc(24);
  header.write(CFEB_MAGIC, 0, "ascii");
  header.writeUInt32LE(CFEB_VERSION, 4);
  header.writeUInt32LE(ds.dim, 8);
  header.writeUInt32LE(ds.trainLabels.length, 12);
  header.writeUInt32LE(ds.testLabels.length, 16);
  header.writeUInt32LE(ds.classNames.length, 20);

  const parts: Buffer[] = [
    header,
    floatBlock(ds.trainFeatures),
    labelBlock(ds.trainLabels),
    floatBlock(ds.testFeatures),
    labelBlock(ds.testLabels),
    floatBlock(ds.textFeatures),
  ];
  for (const name of ds.classNames) {
    const encoded = Buffer.from(name, "utf-8");
    if (encoded.length > 0xffff) throw new Error(`class name too long: ${name.slice(0, 40)}`);
    const len = Buffer.alloc(2);
    len.writeUInt16LE(encoded.length, 0);
    parts.push(len, encoded);
  }
  return Buffer.concat(parts);
}

/** Write atomically: temp file in the target directory, then rename. */
export async function writeCfeb(ds: CfebDataset, outPath: string): Promise<void> {
  const buf = encodeCfeb(ds);
  const dir = path.dirname(path.resolve(outPath));
  await fs.mkdir(dir, { recursive: true });
  const tmp = path.join(dir, `.${path.basename(outPath)}.tmp-${process.pid}`);
  await fs.writeFile(tmp, buf);
  await fs.rename(tmp, outPath);
}

/** Parse a CFEB file back; used for self-checks and tests. */
export function decodeCfeb(buf: Buffer): CfebDataset {
  let offset = 0;
  const take = (n: number, what: string): Buffer => {
    if (offset + n > buf.length) {
      throw new Error(`truncated CFEB: wanted ${n} bytes for ${what} at offset ${offset}`);
    }
    const slice = buf.subarray(offset, offset + n);
    offset += n;
    return slice;
  };
  const magic = take(4, "magic").toString("ascii");
  if (magic !== CFEB_MAGIC) {
    throw new Error(`bad magic at offset 0: expected ${CFEB_MAGIC}, got ${JSON.stringify(magic)}`);
  }
  const version = take(4, "version").readUInt32LE(0);
  if (version !== CFEB_VERSION) throw new Error(`unsupported CFEB version ${version}`);
  const dim = take(4, "dim").readUInt32LE(0);
  const nTrain = take(4, "nTrain").readUInt32LE(0);
  const nTest = take(4, "nTest").readUInt32LE(0);
  const numClasses = take(4, "classes").readUInt32LE(0);

  const floats = (n: number, what: string): Float32Array => {
    const raw = take(n * 4, what);
    const out = new Float32Array(n);
    for (let i = 0; i < n; i++) out[i] = raw.readFloatLE(i * 4);
    return out;
  };
  const labels = (n: number, what: string): Uint32Array => {
    const raw = take(n * 4, what);
    const out = new Uint32Array(n);
    for (let i = 0; i < n; i++) out[i] = raw.readUInt32LE(i * 4);
    return out;
  };

  const ds: CfebDataset = {
    dim,
    trainFeatures: floats(nTrain * dim, "train features"),
    trainLabels: labels(nTrain, "train labels"),
    testFeatures: floats(nTest * dim, "test features"),
    testLabels: labels(nTest, "test labels"),
    textFeatures: floats(numClasses * dim, "text features"),
    classNames: [],
  };
  for (let i = 0; i < numClasses; i++) {
    const len = take(2, `name length ${i}`).readUInt16LE(0);
    ds.classNames.push(take(len, `name ${i}`).toString("utf-8"));
  }
  if (offset !== buf.length) {
    throw new Error(`trailing bytes after offset ${offset}`);
  }
  validateDataset(ds);
  return ds;
}

/** In-place row normalization; rows with tiny norms are left untouched. */
export function l2NormalizeRows(features: Float32Array, dim: number): void {
  for (let row = 0; row < features.length / dim; row++) {
    let sumSq = 0;
    for (let j = 0; j < dim; j++) sumSq += features[row * dim + j] ** 2;
    const norm = Math.sqrt(sumSq);
    if (norm < 1e-12) continue;
    for (let j = 0; j < dim; j++) features[row * dim + j] /= norm;
  }
}
