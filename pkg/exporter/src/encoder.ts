/**
 * Embedding backends. The real one wraps a pretrained CLIP-family model
 * through transformers.js (loaded lazily, since model weights download on
 * first use); the mock one is a deterministic hash-based stand-in so the
 * export pipeline and CFEB output can be tested without weights.
 */

export interface RawImageData {
  /** Interleaved RGB, length = width * height * 3. */
  data: Uint8Array;
  width: number;
  height: number;
}

/** Either raw pixels (CIFAR records) or a path to an image file on disk. */
export type ImageSource = RawImageData | { path: string };

export function isRawImage(source: ImageSource): source is RawImageData {
  return (source as RawImageData).data !== undefined;
}

export interface Encoder {
  readonly dim: number;
  embedImages(images: ImageSource[]): Promise<Float32Array[]>;
  embedTexts(texts: string[]): Promise<Float32Array[]>;
}

/* ----------------------------------------------------------- mock backend */

function fnv1a(bytes: Uint8Array | Buffer): number {
  let hash = 0x811c9dc5;
  for (let i = 0; i < bytes.length; i++) {
    hash ^= bytes[i];
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function seededUnitVector(seed: number, dim: number): Float32Array {
  const rand = mulberry32(seed);
  const out = new Float32Array(dim);
  let sumSq = 0;
  for (let i = 0; i < dim; i++) {
    // Box-Muller; two uniforms per draw keeps the stream simple
    const u = Math.max(rand(), 1e-12);
    const v = rand();
    out[i] = Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * v);
    sumSq += out[i] ** 2;
  }
  const norm = Math.sqrt(sumSq) || 1;
  for (let i = 0; i < dim; i++) out[i] /= norm;
  return out;
}

/** Deterministic stand-in encoder: embeddings depend only on the bytes in. */
export class MockEncoder implements Encoder {
  constructor(readonly dim: number = 64) {}

  async embedImages(images: ImageSource[]): Promise<Float32Array[]> {
    const { promises: fs } = await import("node:fs");
    const out: Float32Array[] = [];
    for (const source of images) {
      const bytes = isRawImage(source) ? source.data : await fs.readFile(source.path);
      out.push(seededUnitVector(fnv1a(bytes), this.dim));
    }
    return out;
  }

  async embedTexts(texts: string[]): Promise<Float32Array[]> {
    return texts.map((t) => seededUnitVector(fnv1a(Buffer.from(t, "utf-8")) ^ 0x5a5a5a5a, this.dim));
  }
}

/* ----------------------------------------------------------- CLIP backend */

const DEFAULT_MODEL = "Xenova/clip-vit-base-patch16";

/**
 * transformers.js CLIP wrapper. Requires `@xenova/transformers` to be
 * installed and (on first use) network access to fetch the model weights.
 */
export class ClipEncoder implements Encoder {
  dim = 0;
  private constructor(
    private readonly lib: any,
    private readonly tokenizer: any,
    private readonly textModel: any,
    private readonly processor: any,
    private readonly visionModel: any,
  ) {}

  static async load(modelId: string = DEFAULT_MODEL): Promise<ClipEncoder> {
    let lib: any;
    try {
      lib = await import("@xenova/transformers");
    } catch {
      throw new Error(
        "the real encoder needs the optional dependency @xenova/transformers; " +
          "run `npm install @xenova/transformers` (or pass --mock for the test backend)",
      );
    }
    const tokenizer = await lib.AutoTokenizer.from_pretrained(modelId);
    const textModel = await lib.CLIPTextModelWithProjection.from_pretrained(modelId, {
      quantized: true,
    });
    const processor = await lib.AutoProcessor.from_pretrained(modelId);
    const visionModel = await lib.CLIPVisionModelWithProjection.from_pretrained(modelId, {
      quantized: true,
    });
    const encoder = new ClipEncoder(lib, tokenizer, textModel, processor, visionModel);
    const probe = await encoder.embedTexts(["probe"]);
    encoder.dim = probe[0].length;
    return encoder;
  }

  async embedImages(images: ImageSource[]): Promise<Float32Array[]> {
    const out: Float32Array[] = [];
    for (const source of images) {
      const raw = isRawImage(source)
        ? new this.lib.RawImage(source.data, source.width, source.height, 3)
        : await this.lib.RawImage.read(source.path);
      const inputs = await this.processor(raw);
      const { image_embeds } = await this.visionModel(inputs);
      out.push(Float32Array.from(image_embeds.data));
    }
    return out;
  }

  async embedTexts(texts: string[]): Promise<Float32Array[]> {
    const out: Float32Array[] = [];
    for (const text of texts) {
      const tokens = this.tokenizer([text], { padding: true, truncation: true });
      const { text_embeds } = await this.textModel(tokens);
      out.push(Float32Array.from(text_embeds.data));
    }
    return out;
  }
}
