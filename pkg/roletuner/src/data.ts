import { readFileSync } from "node:fs";
import { join } from "node:path";

import { SampleSchemaError } from "./errors.js";
import { EncodedSample } from "./model.js";
import { Tokenizer } from "./tokenizer.js";

export const ROLES = [
  "graph_builder",
  "retrieval_judge",
  "sub_answer",
  "summarizer",
  "new_query",
  "reasoner",
] as const;

export interface TrainingSample {
  task: string;
  input: string;
  output: string;
  sourceItemId: string;
  score: number;
}

/** Parse one per-task sample file (line-delimited JSON records). */
export function parseSampleFile(content: string, name: string): TrainingSample[] {
  const samples: TrainingSample[] = [];
  const lines = content.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line) continue;
    let record: unknown;
    try {
      record = JSON.parse(line);
    } catch (e) {
      throw new SampleSchemaError(`${name}:${i + 1}: not valid JSON`);
    }
    const obj = record as Record<string, unknown>;
    for (const field of ["task", "input", "output", "source_item_id", "score"]) {
      if (!(field in obj)) {
        throw new SampleSchemaError(`${name}:${i + 1}: missing field ${field}`);
      }
    }
    if (
      typeof obj.task !== "string" ||
      typeof obj.input !== "string" ||
      typeof obj.output !== "string" ||
      typeof obj.score !== "number"
    ) {
      throw new SampleSchemaError(`${name}:${i + 1}: wrong field types`);
    }
    if (!(ROLES as readonly string[]).includes(obj.task)) {
      throw new SampleSchemaError(`${name}:${i + 1}: unknown task ${obj.task}`);
    }
    samples.push({
      task: obj.task,
      input: obj.input,
      output: obj.output,
      sourceItemId: String(obj.source_item_id),
      score: obj.score,
    });
  }
  return samples;
}

/** Load every per-task file present in a collection directory. */
export function loadSampleDir(dir: string): TrainingSample[] {
  const samples: TrainingSample[] = [];
  for (const role of ROLES) {
    let content: string;
    try {
      content = readFileSync(join(dir, `${role}.jsonl`), "utf-8");
    } catch {
      continue; // task file absent: fine, roles may be trained separately
    }
    samples.push(...parseSampleFile(content, `${role}.jsonl`));
  }
  return samples;
}

/**
 * Lay a sample out as [X; role tokens; Y; <eoa>] and mark the positions whose
 * prediction target lies in the Y region (loss is computed there only).
 * Overlong inputs are truncated from the front so the role tokens and the
 * target stay intact.
 */
export function encodeSample(
  sample: TrainingSample,
  tokenizer: Tokenizer,
  roleTokenIds: Map<string, number[]>,
  maxSeqLen: number,
): EncodedSample {
  const roleIds = roleTokenIds.get(sample.task);
  if (!roleIds) throw new SampleSchemaError(`no role tokens registered for ${sample.task}`);
  let xIds = tokenizer.encode(sample.input);
  const yIds = [...tokenizer.encode(sample.output), tokenizer.endOfAnswerId];
  const budget = maxSeqLen - roleIds.length - yIds.length;
  if (budget < 1) {
    throw new SampleSchemaError(
      `sample from ${sample.sourceItemId} cannot fit within maxSeqLen=${maxSeqLen}`,
    );
  }
  if (xIds.length > budget) xIds = xIds.slice(xIds.length - budget);
  const ids = [...xIds, ...roleIds, ...yIds];
  const boundary = xIds.length + roleIds.length; // first Y position
  const mask = ids.map((_, j) => j + 1 >= boundary && j + 1 < ids.length);
  return { role: sample.task, ids, mask };
}
