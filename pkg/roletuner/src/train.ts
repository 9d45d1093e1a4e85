import { encodeSample, TrainingSample } from "./data.js";
import { NonFiniteLossError } from "./errors.js";
import { EncodedSample, ToyLM } from "./model.js";
import { RowAdam } from "./optimizer.js";
import { Rng } from "./rng.js";
import { Mat } from "./tensor.js";
import { Tokenizer } from "./tokenizer.js";

export interface TrainConfig {
  nTokens: number;
  learningRate: number;
  warmupRatio: number;
  epochs: number;
  batchSize: number;
  maxSeqLen: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  nTokens: 30,
  learningRate: 5e-5,
  warmupRatio: 0.02,
  epochs: 3,
  batchSize: 32,
  maxSeqLen: 2048,
};

export interface TrainResult {
  lossCurve: number[];
  steps: number;
  finalLoss: number;
}

/** Mean-of-sample-means loss and the matching embedding gradient. */
function batchLossAndGrad(
  model: ToyLM,
  batch: EncodedSample[],
): { loss: number; grad: Mat } {
  const grad = Mat.zeros(model.vocabSize, model.config.embeddingDim);
  let loss = 0;
  for (const sample of batch) {
    const result = model.lossAndGrad(sample);
    loss += result.loss / batch.length;
    for (let i = 0; i < grad.data.length; i++) {
      grad.data[i] += result.gradEmbedding.data[i] / batch.length;
    }
  }
  return { loss, grad };
}

/**
 * Tune the role-token embedding rows on encoded samples. The backbone is
 * untouched by construction (the optimizer addresses only the expanded
 * rows); callers can assert this with backboneChecksum().
 */
export function train(
  model: ToyLM,
  tokenizer: Tokenizer,
  roleTokenIds: Map<string, number[]>,
  samples: TrainingSample[],
  config: TrainConfig = DEFAULT_TRAIN,
  options: { maxSteps?: number; shuffleSeed?: number } = {},
): TrainResult {
  const encoded = samples.map((s) =>
    encodeSample(s, tokenizer, roleTokenIds, config.maxSeqLen),
  );
  const perEpoch = Math.ceil(encoded.length / config.batchSize);
  const plannedSteps = options.maxSteps ?? config.epochs * perEpoch;
  const optimizer = new RowAdam(
    model.trainableRowStart,
    model.vocabSize - model.trainableRowStart,
    model.config.embeddingDim,
    {
      learningRate: config.learningRate,
      warmupRatio: config.warmupRatio,
      totalSteps: plannedSteps,
    },
  );

  const rng = options.shuffleSeed === undefined ? null : new Rng(options.shuffleSeed);
  const order = encoded.map((_, i) => i);
  const lossCurve: number[] = [];
  let step = 0;
  while (step < plannedSteps) {
    if (rng) {
      for (let i = order.length - 1; i > 0; i--) {
        const j = Math.floor(rng.next() * (i + 1));
        [order[i], order[j]] = [order[j], order[i]];
      }
    }
    for (let start = 0; start < order.length && step < plannedSteps; start += config.batchSize) {
      const batch = order.slice(start, start + config.batchSize).map((i) => encoded[i]);
      const { loss, grad } = batchLossAndGrad(model, batch);
      if (!Number.isFinite(loss)) throw new NonFiniteLossError(step, loss);
      lossCurve.push(loss);
      optimizer.apply(model.embedding, grad);
      step += 1;
    }
  }
  return { lossCurve, steps: step, finalLoss: lossCurve[lossCurve.length - 1] ?? NaN };
}
