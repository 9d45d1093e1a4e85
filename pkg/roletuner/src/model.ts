import { createHash } from "node:crypto";

import { Rng } from "./rng.js";
import {
  Mat,
  addInPlace,
  addRowVectorInPlace,
  matmul,
  matmulT1,
  matmulT2,
  tanhInPlace,
} from "./tensor.js";
import { Tokenizer } from "./tokenizer.js";

export interface ModelConfig {
  embeddingDim: number;
  hiddenDim: number;
  layers: number;
  seed: number;
}

export const DEFAULT_MODEL: ModelConfig = {
  embeddingDim: 64,
  hiddenDim: 128,
  layers: 2,
  seed: 1234,
};

export interface ParamCensus {
  total: number;
  frozen: number;
  trainable: number;
}

interface Block {
  wq: Mat;
  wk: Mat;
  wv: Mat;
  wo: Mat;
  w1: Mat;
  b1: Float64Array;
  w2: Mat;
  b2: Float64Array;
}

export interface EncodedSample {
  role: string;
  ids: number[];
  /** mask[j] is true when position j's prediction target lies in Y. */
  mask: boolean[];
}

/**
 * Tiny causal language model: token embeddings, a stack of single-head
 * attention blocks with tanh feed-forwards between residuals, and a separate
 * projection onto the base vocabulary. The backbone is frozen after
 * construction; only embedding rows appended by expandVocabulary are ever
 * trainable, so roles specialize through their reserved tokens alone.
 */
export class ToyLM {
  readonly embedding: Mat; // V x d; rows >= baseVocabSize are the trainable block
  readonly blocks: Block[];
  readonly unembed: Mat; // d x baseVocabSize
  readonly roleRows = new Map<string, { start: number; end: number }>();
  private expandedRows = 0;

  private constructor(
    readonly config: ModelConfig,
    readonly baseVocabSize: number,
    embedding: Mat,
    blocks: Block[],
    unembed: Mat,
  ) {
    this.embedding = embedding;
    this.blocks = blocks;
    this.unembed = unembed;
  }

  static init(baseVocabSize: number, config: ModelConfig = DEFAULT_MODEL): ToyLM {
    const { embeddingDim: d, hiddenDim: h, layers, seed } = config;
    const rng = new Rng(seed);
    const gaussMat = (rows: number, cols: number, scale: number): Mat => {
      const m = Mat.zeros(rows, cols);
      for (let i = 0; i < m.data.length; i++) m.data[i] = rng.gauss() * scale;
      return m;
    };
    const embedding = gaussMat(baseVocabSize, d, 0.5);
    const attnScale = 1 / Math.sqrt(d);
    const blocks: Block[] = [];
    for (let b = 0; b < layers; b++) {
      blocks.push({
        wq: gaussMat(d, d, attnScale),
        wk: gaussMat(d, d, attnScale),
        wv: gaussMat(d, d, attnScale),
        wo: gaussMat(d, d, attnScale),
        w1: gaussMat(d, h, 1 / Math.sqrt(d)),
        b1: new Float64Array(h),
        w2: gaussMat(h, d, 1 / Math.sqrt(h)),
        b2: new Float64Array(d),
      });
    }
    const unembed = gaussMat(d, baseVocabSize, attnScale);
    return new ToyLM(config, baseVocabSize, embedding, blocks, unembed);
  }

  get vocabSize(): number {
    return this.baseVocabSize + this.expandedRows;
  }

  get trainableRowStart(): number {
    return this.baseVocabSize;
  }

  /**
   * Append freshly initialized rows for every role's reserved tokens. New
   * rows start at the mean of the existing embedding rows plus small noise.
   * Everything that existed before stays frozen; the census reports the
   * partition (trainable = roles x tokensPerRole x embeddingDim).
   */
  expandVocabulary(
    tokenizer: Tokenizer,
    roles: string[],
    tokensPerRole: number,
  ): { model: ToyLM; census: ParamCensus } {
    const d = this.config.embeddingDim;
    const byRole = tokenizer.addRoleTokens(roles, tokensPerRole);
    const added = roles.length * tokensPerRole;
    const grown = Mat.zeros(this.vocabSize + added, d);
    grown.data.set(this.embedding.data, 0);

    const mean = new Float64Array(d);
    for (let i = 0; i < this.embedding.rows; i++) {
      const row = this.embedding.row(i);
      for (let j = 0; j < d; j++) mean[j] += row[j];
    }
    for (let j = 0; j < d; j++) mean[j] /= this.embedding.rows;

    const rng = new Rng(this.config.seed ^ 0x5eed);
    const model = new ToyLM(this.config, this.baseVocabSize, grown, this.blocks, this.unembed);
    model.expandedRows = this.expandedRows + added;
    for (const [role, range] of this.roleRows) model.roleRows.set(role, range);
    for (const [role, ids] of byRole) {
      const start = ids[0];
      const end = ids[ids.length - 1] + 1;
      model.roleRows.set(role, { start, end });
      for (let r = start; r < end; r++) {
        const row = grown.row(r);
        for (let j = 0; j < d; j++) row[j] = mean[j] + 0.02 * rng.gauss();
      }
    }
    return { model, census: model.census() };
  }

  census(): ParamCensus {
    const d = this.config.embeddingDim;
    const h = this.config.hiddenDim;
    const blockParams = this.blocks.length * (4 * d * d + d * h + h + h * d + d);
    const total = this.vocabSize * d + blockParams + d * this.baseVocabSize;
    const trainable = this.expandedRows * d;
    return { total, frozen: total - trainable, trainable };
  }

  /** SHA-256 over every frozen tensor, in a fixed order. */
  backboneChecksum(): string {
    const hash = createHash("sha256");
    const feed = (data: Float64Array) =>
      hash.update(Buffer.from(data.buffer, data.byteOffset, data.byteLength));
    feed(this.embedding.data.subarray(0, this.baseVocabSize * this.config.embeddingDim));
    for (const block of this.blocks) {
      feed(block.wq.data);
      feed(block.wk.data);
      feed(block.wv.data);
      feed(block.wo.data);
      feed(block.w1.data);
      feed(block.b1);
      feed(block.w2.data);
      feed(block.b2);
    }
    feed(this.unembed.data);
    return hash.digest("hex");
  }

  roleEmbedding(role: string): number[][] {
    const range = this.roleRows.get(role);
    if (!range) throw new Error(`no rows for role ${role}`);
    const rows: number[][] = [];
    for (let r = range.start; r < range.end; r++) rows.push([...this.embedding.row(r)]);
    return rows;
  }

  /**
   * Mean masked cross-entropy over one sample, plus the gradient with
   * respect to the embedding table (the only tensor training may touch).
   * Backbone weight gradients are never formed; freezing is structural.
   */
  lossAndGrad(sample: EncodedSample): {
    loss: number;
    maskedCount: number;
    gradEmbedding: Mat;
  } {
    const { ids, mask } = sample;
    const d = this.config.embeddingDim;
    const seq = ids.length;
    const invSqrtD = 1 / Math.sqrt(d);

    let x = Mat.zeros(seq, d);
    for (let j = 0; j < seq; j++) x.row(j).set(this.embedding.row(ids[j]));

    interface BlockCache {
      input: Mat;
      q: Mat;
      k: Mat;
      v: Mat;
      attn: Mat;
      attnOut: Mat;
      afterAttn: Mat;
      hidden: Mat;
    }
    const caches: BlockCache[] = [];

    for (const block of this.blocks) {
      const input = x;
      const q = matmul(input, block.wq);
      const k = matmul(input, block.wk);
      const v = matmul(input, block.wv);
      const attn = Mat.zeros(seq, seq);
      for (let i = 0; i < seq; i++) {
        let max = -Infinity;
        for (let j = 0; j <= i; j++) {
          let score = 0;
          for (let t = 0; t < d; t++) score += q.get(i, t) * k.get(j, t);
          score *= invSqrtD;
          attn.set(i, j, score);
          if (score > max) max = score;
        }
        let norm = 0;
        for (let j = 0; j <= i; j++) {
          const e = Math.exp(attn.get(i, j) - max);
          attn.set(i, j, e);
          norm += e;
        }
        for (let j = 0; j <= i; j++) attn.set(i, j, attn.get(i, j) / norm);
      }
      const attnOut = matmul(attn, v);
      const afterAttn = matmul(attnOut, block.wo);
      addInPlace(afterAttn, input); // residual
      const hidden = matmul(afterAttn, block.w1);
      addRowVectorInPlace(hidden, block.b1);
      tanhInPlace(hidden);
      const ffnOut = matmul(hidden, block.w2);
      addRowVectorInPlace(ffnOut, block.b2);
      addInPlace(ffnOut, afterAttn); // residual
      caches.push({ input, q, k, v, attn, attnOut, afterAttn, hidden });
      x = ffnOut;
    }

    // Next-token cross-entropy on masked positions.
    const logits = matmul(x, this.unembed); // seq x baseVocab
    const dLogits = Mat.zeros(seq, this.baseVocabSize);
    let loss = 0;
    let maskedCount = 0;
    for (let j = 0; j < seq - 1; j++) {
      if (!mask[j]) continue;
      maskedCount++;
      const target = ids[j + 1];
      const row = logits.row(j);
      let max = -Infinity;
      for (const value of row) if (value > max) max = value;
      let norm = 0;
      for (const value of row) norm += Math.exp(value - max);
      loss += -(row[target] - max - Math.log(norm));
      const dRow = dLogits.row(j);
      for (let t = 0; t < this.baseVocabSize; t++) dRow[t] = Math.exp(row[t] - max) / norm;
      dRow[target] -= 1;
    }
    if (maskedCount > 0) {
      loss /= maskedCount;
      for (let i = 0; i < dLogits.data.length; i++) dLogits.data[i] /= maskedCount;
    }

    let dX = matmulT2(dLogits, this.unembed); // seq x d

    for (let b = this.blocks.length - 1; b >= 0; b--) {
      const block = this.blocks[b];
      const cache = caches[b];
      // Feed-forward (residual): out = afterAttn + tanh(afterAttn W1 + b1) W2 + b2
      const dHidden = matmulT2(dX, block.w2);
      for (let i = 0; i < dHidden.data.length; i++) {
        const t = cache.hidden.data[i];
        dHidden.data[i] *= 1 - t * t;
      }
      const dAfterAttn = matmulT2(dHidden, block.w1);
      addInPlace(dAfterAttn, dX); // residual path

      // Attention (residual): afterAttn = input + (softmax(QK^T) V) Wo
      const dAttnOut = matmulT2(dAfterAttn, block.wo);
      const dAttn = matmulT2(dAttnOut, cache.v); // seq x seq
      const dV = matmulT1(cache.attn, dAttnOut);
      const dScores = Mat.zeros(seq, seq);
      for (let i = 0; i < seq; i++) {
        let dot = 0;
        for (let j = 0; j <= i; j++) dot += dAttn.get(i, j) * cache.attn.get(i, j);
        for (let j = 0; j <= i; j++) {
          dScores.set(i, j, cache.attn.get(i, j) * (dAttn.get(i, j) - dot));
        }
      }
      const dQ = matmul(dScores, cache.k);
      const dK = matmulT1(dScores, cache.q);
      for (let i = 0; i < dQ.data.length; i++) dQ.data[i] *= invSqrtD;
      for (let i = 0; i < dK.data.length; i++) dK.data[i] *= invSqrtD;

      const dInput = dAfterAttn; // residual path, reused as accumulator
      addInPlace(dInput, matmulT2(dQ, block.wq));
      addInPlace(dInput, matmulT2(dK, block.wk));
      addInPlace(dInput, matmulT2(dV, block.wv));
      dX = dInput;
    }

    const gradEmbedding = Mat.zeros(this.vocabSize, d);
    for (let j = 0; j < seq; j++) {
      const target = gradEmbedding.row(ids[j]);
      const source = dX.row(j);
      for (let t = 0; t < d; t++) target[t] += source[t];
    }
    return { loss, maskedCount, gradEmbedding };
  }

  /** Forward-only loss, for finite-difference checks. */
  loss(sample: EncodedSample): number {
    return this.lossAndGrad(sample).loss;
  }
}
