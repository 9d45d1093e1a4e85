#!/usr/bin/env node
/**
 * Train role-token embeddings on a collected sample directory and export
 * the adapter:
 *
 *   roletuner train --samples DIR --out adapter.bin [--n-tokens 30]
 *       [--lr 5e-5] [--warmup 0.02] [--epochs 3] [--batch-size 32]
 *       [--max-seq-len 2048] [--dim 64] [--hidden 128] [--layers 2]
 *       [--seed 1234]
 */

import { exportAdapter } from "./adapter.js";
import { ROLES, loadSampleDir } from "./data.js";
import { ToyLM } from "./model.js";
import { Tokenizer } from "./tokenizer.js";
import { DEFAULT_TRAIN, train } from "./train.js";

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`bad arguments near ${key}`);
    }
    args.set(key.slice(2), argv[i + 1]);
  }
  return args;
}

function main(): number {
  const [command, ...rest] = process.argv.slice(2);
  if (command !== "train") {
    console.error("usage: roletuner train --samples DIR --out FILE [options]");
    return 1;
  }
  const args = parseArgs(rest);
  const samplesDir = args.get("samples");
  const out = args.get("out");
  if (!samplesDir || !out) {
    console.error("both --samples and --out are required");
    return 1;
  }
  const num = (key: string, fallback: number) =>
    args.has(key) ? Number(args.get(key)) : fallback;

  const samples = loadSampleDir(samplesDir);
  if (samples.length === 0) {
    console.error(`no samples found under ${samplesDir}`);
    return 1;
  }
  const config = {
    nTokens: num("n-tokens", DEFAULT_TRAIN.nTokens),
    learningRate: num("lr", DEFAULT_TRAIN.learningRate),
    warmupRatio: num("warmup", DEFAULT_TRAIN.warmupRatio),
    epochs: num("epochs", DEFAULT_TRAIN.epochs),
    batchSize: num("batch-size", DEFAULT_TRAIN.batchSize),
    maxSeqLen: num("max-seq-len", DEFAULT_TRAIN.maxSeqLen),
  };
  const tokenizer = Tokenizer.fromTexts(samples.flatMap((s) => [s.input, s.output]));
  const base = ToyLM.init(tokenizer.size, {
    embeddingDim: num("dim", 64),
    hiddenDim: num("hidden", 128),
    layers: num("layers", 2),
    seed: num("seed", 1234),
  });
  const roleTokenIds = new Map<string, number[]>();
  const { model, census } = base.expandVocabulary(tokenizer, [...ROLES], config.nTokens);
  for (const role of ROLES) {
    const range = model.roleRows.get(role)!;
    roleTokenIds.set(role, Array.from({ length: range.end - range.start }, (_, i) => range.start + i));
  }
  console.log(
    `samples: ${samples.length}  vocab: ${tokenizer.size}  ` +
      `trainable: ${census.trainable} of ${census.total} params`,
  );
  const result = train(model, tokenizer, roleTokenIds, samples, config, { shuffleSeed: 7 });
  console.log(
    `steps: ${result.steps}  first loss: ${result.lossCurve[0]?.toFixed(4)}  ` +
      `final loss: ${result.finalLoss.toFixed(4)}`,
  );
  exportAdapter(out, model);
  console.log(`adapter written to ${out}`);
  return 0;
}

process.exit(main());
