/**
 * The export pipeline: load a dataset, push images and class prompts
 * through an encoder, L2-normalize everything, and write a CFEB file the
 * engine can consume directly.
 */

import { writeCfeb, l2NormalizeRows, type CfebDataset } from "./cfeb.js";
import { loadCifar100 } from "./cifar.js";
import { loadImageFolder } from "./imagefolder.js";
import { ClipEncoder, MockEncoder, type Encoder, type ImageSource } from "./encoder.js";

export const CLASS_PLACEHOLDER = "[CLASS]";
export const DEFAULT_TEMPLATE = "a photo of a [CLASS]";

export interface ExportSpec {
  dataset: "cifar100" | "imagefolder";
  root: string;
  out: string;
  template?: string;
  encoderId?: string;
  /** Use the deterministic mock backend instead of a pretrained model. */
  mock?: boolean;
  mockDim?: number;
  /** Cap images per class in each split (smoke runs). */
  limitPerClass?: number;
  batchSize?: number;
  log?: (line: string) => void;
}

export function validateTemplate(template: string): void {
  const first = template.indexOf(CLASS_PLACEHOLDER);
  if (first === -1) {
    throw new Error(`prompt template must contain the ${CLASS_PLACEHOLDER} placeholder`);
  }
  if (template.indexOf(CLASS_PLACEHOLDER, first + 1) !== -1) {
    throw new Error(`prompt template must contain exactly one ${CLASS_PLACEHOLDER}`);
  }
}

export function fillTemplate(template: string, className: string): string {
  // folder/dataset class names use underscores; prompts read better with spaces
  return template.replace(CLASS_PLACEHOLDER, className.replace(/_/g, " "));
}

async function embedAll(
  encoder: Encoder,
  images: ImageSource[],
  batchSize: number,
  log: (line: string) => void,
  what: string,
): Promise<Float32Array> {
  const dim = encoder.dim;
  const out = new Float32Array(images.length * dim);
  for (let start = 0; start < images.length; start += batchSize) {
    const batch = images.slice(start, start + batchSize);
    const embeddings = await encoder.embedImages(batch);
    embeddings.forEach((vec, i) => {
      if (vec.length !== dim) {
        throw new Error(`encoder returned dim ${vec.length}, expected ${dim}`);
      }
      out.set(vec, (start + i) * dim);
    });
    if ((start / batchSize) % 20 === 0) {
      log(`  ${what}: ${Math.min(start + batch.length, images.length)}/${images.length}`);
    }
  }
  return out;
}

export async function runExport(spec: ExportSpec): Promise<CfebDataset> {
  const template = spec.template ?? DEFAULT_TEMPLATE;
  validateTemplate(template);
  const log = spec.log ?? (() => {});
  const batchSize = spec.batchSize ?? 64;

  log(`loading ${spec.dataset} from ${spec.root}`);
  const data =
    spec.dataset === "cifar100"
      ? await loadCifar100(spec.root, spec.limitPerClass)
      : await loadImageFolder(spec.root, spec.limitPerClass);

  const encoder: Encoder = spec.mock
    ? new MockEncoder(spec.mockDim ?? 64)
    : await ClipEncoder.load(spec.encoderId);
  log(`encoder ready (dim ${encoder.dim})`);

  const prompts = data.classNames.map((name) => fillTemplate(template, name));
  const textVectors = await encoder.embedTexts(prompts);
  const textFeatures = new Float32Array(data.classNames.length * encoder.dim);
  textVectors.forEach((vec, i) => textFeatures.set(vec, i * encoder.dim));

  const trainFeatures = await embedAll(encoder, data.train.images, batchSize, log, "train");
  const testFeatures = await embedAll(encoder, data.test.images, batchSize, log, "test");

  for (const block of [trainFeatures, testFeatures, textFeatures]) {
    l2NormalizeRows(block, encoder.dim);
  }

  const dataset: CfebDataset = {
    dim: encoder.dim,
    trainFeatures,
    trainLabels: data.train.labels,
    testFeatures,
    testLabels: data.test.labels,
    textFeatures,
    classNames: data.classNames,
  };
  await writeCfeb(dataset, spec.out);
  log(
    `wrote ${spec.out}: ${data.classNames.length} classes, dim ${encoder.dim}, ` +
      `${data.train.labels.length} train / ${data.test.labels.length} test rows`,
  );
  return dataset;
}
