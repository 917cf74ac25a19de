/**
 * ImageNet100-style folder loader: root/train/<class>/* and
 * root/val/<class>/* (test split falls back to root/test if val is
 * absent). Class order is the sorted union of the two splits' directories.
 */

import { promises as fs } from "node:fs";
import * as path from "node:path";

import type { ImageSource } from "./encoder.js";

const IMAGE_EXTENSIONS = new Set([".jpg", ".jpeg", ".png", ".bmp", ".webp"]);

export interface FolderSplit {
  images: ImageSource[];
  labels: Uint32Array;
}

export interface ImageFolderDataset {
  train: FolderSplit;
  test: FolderSplit;
  classNames: string[];
}

async function listClassDirs(splitDir: string): Promise<string[]> {
  const entries = await fs.readdir(splitDir, { withFileTypes: true });
  return entries.filter((e) => e.isDirectory()).map((e) => e.name);
}

async function loadSplit(
  splitDir: string,
  classIndex: Map<string, number>,
  limitPerClass?: number,
): Promise<FolderSplit> {
  const images: ImageSource[] = [];
  const labels: number[] = [];
  for (const [className, label] of classIndex) {
    const dir = path.join(splitDir, className);
    let files: string[];
    try {
      files = await fs.readdir(dir);
    } catch {
      continue; // class missing from this split
    }
    files = files
      .filter((f) => IMAGE_EXTENSIONS.has(path.extname(f).toLowerCase()))
      .sort();
    if (limitPerClass !== undefined) files = files.slice(0, limitPerClass);
    for (const file of files) {
      images.push({ path: path.join(dir, file) });
      labels.push(label);
    }
  }
  return { images, labels: Uint32Array.from(labels) };
}

export async function loadImageFolder(
  root: string,
  limitPerClass?: number,
): Promise<ImageFolderDataset> {
  const trainDir = path.join(root, "train");
  let testDir = path.join(root, "val");
  try {
    await fs.access(testDir);
  } catch {
    testDir = path.join(root, "test");
  }
  let trainClasses: string[];
  try {
    trainClasses = await listClassDirs(trainDir);
  } catch {
    throw new Error(`missing ${trainDir}; expected root/train/<class>/ image folders`);
  }
  const testClasses = await listClassDirs(testDir).catch(() => [] as string[]);
  const classNames = [...new Set([...trainClasses, ...testClasses])].sort();
  if (classNames.length < 2) {
    throw new Error(`need at least 2 class folders under ${root}`);
  }
  const classIndex = new Map(classNames.map((name, i) => [name, i]));
  return {
    train: await loadSplit(trainDir, classIndex, limitPerClass),
    test: await loadSplit(testDir, classIndex, limitPerClass),
    classNames,
  };
}
