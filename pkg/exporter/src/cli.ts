#!/usr/bin/env node
/**
 * calfuse-export: embed a local image dataset with a pretrained
 * vision-language model and write a CFEB file for the engine.
 *
 * Examples:
 *   calfuse-export --dataset cifar100 --root ./cifar-100-binary --out cifar100.cfeb
 *   calfuse-export --dataset imagefolder --root ./imagenet100 \
 *       --template "a photo of a [CLASS]" --out imagenet100.cfeb
 */

import { parseArgs } from "node:util";

import { DEFAULT_TEMPLATE, runExport } from "./export.js";

function usage(): string {
  return [
    "usage: calfuse-export --dataset {cifar100|imagefolder} --root DIR --out PATH",
    "                      [--template STR] [--encoder MODEL_ID] [--mock]",
    "                      [--mock-dim N] [--limit-per-class N] [--batch N]",
    "",
    `default template: "${DEFAULT_TEMPLATE}" ([CLASS] is replaced per class)`,
    "default encoder:  Xenova/clip-vit-base-patch16 (downloads on first use)",
  ].join("\n");
}

async function main(): Promise<number> {
  let values;
  try {
    ({ values } = parseArgs({
      options: {
        dataset: { type: "string" },
        root: { type: "string" },
        out: { type: "string" },
        template: { type: "string", default: DEFAULT_TEMPLATE },
        encoder: { type: "string" },
        mock: { type: "boolean", default: false },
        "mock-dim": { type: "string" },
        "limit-per-class": { type: "string" },
        batch: { type: "string" },
        help: { type: "boolean", default: false },
      },
    }));
  } catch (e) {
    console.error((e as Error).message);
    console.error(usage());
    return 1;
  }
  if (values.help) {
    console.log(usage());
    return 0;
  }
  if (!values.dataset || !values.root || !values.out) {
    console.error("missing required arguments");
    console.error(usage());
    return 1;
  }
  if (values.dataset !== "cifar100" && values.dataset !== "imagefolder") {
    console.error(`unknown dataset ${values.dataset}`);
    return 1;
  }
  const intOr = (raw: string | undefined, what: string): number | undefined => {
    if (raw === undefined) return undefined;
    const n = Number.parseInt(raw, 10);
    if (!Number.isFinite(n) || n < 1) throw new Error(`bad ${what}: ${raw}`);
    return n;
  };
  try {
    await runExport({
      dataset: values.dataset,
      root: values.root,
      out: values.out,
      template: values.template,
      encoderId: values.encoder,
      mock: values.mock,
      mockDim: intOr(values["mock-dim"], "--mock-dim"),
      limitPerClass: intOr(values["limit-per-class"], "--limit-per-class"),
      batchSize: intOr(values.batch, "--batch"),
      log: (line) => console.log(line),
    });
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 1;
  }
}

main().then((code) => {
  process.exitCode = code;
});
