/**
 * CIFAR-100 binary-format loader (the `cifar-100-binary` distribution):
 * train.bin / test.bin hold fixed-size records of
 * 1 coarse-label byte + 1 fine-label byte + 3072 pixel bytes (32x32,
 * planar R then G then B); fine_label_names.txt lists the 100 classes.
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

import type { RawImageData } from "./encoder.js";

export const CIFAR_SIDE = 32;
export const CIFAR_PIXELS = CIFAR_SIDE * CIFAR_SIDE;
export const CIFAR_RECORD = 2 + 3 * CIFAR_PIXELS;
export const CIFAR_CLASSES = 100;

export interface LabeledImages {
  images: RawImageData[];
  labels: Uint32Array;
}

export interface Cifar100 {
  train: LabeledImages;
  test: LabeledImages;
  classNames: string[];
}

function planarToInterleaved(record: Buffer): Uint8Array {
  const out = new Uint8Array(3 * CIFAR_PIXELS);
  for (let i = 0; i < CIFAR_PIXELS; i++) {
    out[3 * i] = record[i];
    out[3 * i + 1] = record[CIFAR_PIXELS + i];
    out[3 * i + 2] = record[2 * CIFAR_PIXELS + i];
  }
  return out;
}

export function parseCifarRecords(buf: Buffer, limitPerClass?: number): LabeledImages {
  if (buf.length % CIFAR_RECORD !== 0) {
    throw new Error(
      `CIFAR binary size ${buf.length} is not a multiple of the ${CIFAR_RECORD}-byte record`,
    );
  }
  const images: RawImageData[] = [];
  const labels: number[] = [];
  const perClass = new Map<number, number>();
  for (let rec = 0; rec < buf.length / CIFAR_RECORD; rec++) {
    const start = rec * CIFAR_RECORD;
    const fine = buf[start + 1];
    if (limitPerClass !== undefined) {
      const seen = perClass.get(fine) ?? 0;
      if (seen >= limitPerClass) continue;
      perClass.set(fine, seen + 1);
    }
    const pixels = buf.subarray(start + 2, start + CIFAR_RECORD);
    images.push({
      data: planarToInterleaved(Buffer.from(pixels)),
      width: CIFAR_SIDE,
      height: CIFAR_SIDE,
    });
    labels.push(fine);
  }
  return { images, labels: Uint32Array.from(labels) };
}

export async function loadCifar100(root: string, limitPerClass?: number): Promise<Cifar100> {
  const read = async (name: string) => {
    try {
      return await fs.readFile(path.join(root, name));
    } catch (e) {
      throw new Error(
        `missing ${name} under ${root}; expected the extracted cifar-100-binary layout`,
      );
    }
  };
  const names = (await read("fine_label_names.txt"))
    .toString("utf-8")
    .split("\n")
    .map((line) => line.trim())
    .filter((line) => line.length > 0);
  if (names.length !== CIFAR_CLASSES) {
    throw new Error(`expected ${CIFAR_CLASSES} class names, got ${names.length}`);
  }
  const train = parseCifarRecords(await read("train.bin"), limitPerClass);
  const test = parseCifarRecords(await read("test.bin"), limitPerClass);
  return { train, test, classNames: names };
}
