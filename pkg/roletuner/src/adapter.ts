import { createHash } from "node:crypto";
import { readFileSync, writeFileSync } from "node:fs";

import { FingerprintMismatchError, MalformedAdapterError } from "./errors.js";
import { ToyLM } from "./model.js";
import { Tokenizer, roleTokenLiteral } from "./tokenizer.js";

const MAGIC = Buffer.from("RTADPT01", "ascii");

/**
 * Adapter container layout (shared with the engine that consumes it):
 *   bytes 0..7    magic "RTADPT01"
 *   bytes 8..11   uint32 LE manifest length H
 *   12..12+H      UTF-8 JSON manifest {model_fingerprint, embedding_dim,
 *                 tokens_per_role, roles: [{name, tokens}], payload_sha256}
 *   rest          per role, tokens_per_role x embedding_dim float32 LE rows
 */
export interface AdapterData {
  modelFingerprint: string;
  embeddingDim: number;
  tokensPerRole: number;
  tokens: Map<string, string[]>;
  embeddings: Map<string, number[][]>;
}

export function exportAdapter(path: string, model: ToyLM): AdapterData {
  const roles = [...model.roleRows.keys()];
  if (roles.length === 0) throw new MalformedAdapterError("model has no role rows to export");
  const d = model.config.embeddingDim;
  const fingerprint = model.backboneChecksum();

  const tokens = new Map<string, string[]>();
  const embeddings = new Map<string, number[][]>();
  let tokensPerRole = 0;
  const chunks: Buffer[] = [];
  for (const role of roles) {
    const rows = model.roleEmbedding(role);
    tokensPerRole = rows.length;
    tokens.set(role, rows.map((_, i) => roleTokenLiteral(role, i)));
    embeddings.set(role, rows);
    const chunk = Buffer.alloc(rows.length * d * 4);
    rows.forEach((row, i) => {
      row.forEach((value, j) => chunk.writeFloatLE(value, (i * d + j) * 4));
    });
    chunks.push(chunk);
  }
  const payload = Buffer.concat(chunks);
  const manifest = {
    model_fingerprint: fingerprint,
    embedding_dim: d,
    tokens_per_role: tokensPerRole,
    roles: roles.map((role) => ({ name: role, tokens: tokens.get(role)! })),
    payload_sha256: createHash("sha256").update(payload).digest("hex"),
  };
  const header = Buffer.from(JSON.stringify(manifest), "utf-8");
  const lengthField = Buffer.alloc(4);
  lengthField.writeUInt32LE(header.length, 0);
  writeFileSync(path, Buffer.concat([MAGIC, lengthField, header, payload]));
  return {
    modelFingerprint: fingerprint,
    embeddingDim: d,
    tokensPerRole,
    tokens,
    embeddings,
  };
}

export function readAdapter(path: string): AdapterData {
  const raw = readFileSync(path);
  if (raw.length < 12 || !raw.subarray(0, 8).equals(MAGIC)) {
    throw new MalformedAdapterError("bad magic; not an adapter file");
  }
  const headerLength = raw.readUInt32LE(8);
  if (raw.length < 12 + headerLength) throw new MalformedAdapterError("truncated manifest");
  let manifest: any;
  try {
    manifest = JSON.parse(raw.subarray(12, 12 + headerLength).toString("utf-8"));
  } catch {
    throw new MalformedAdapterError("manifest is not valid JSON");
  }
  const d: number = manifest.embedding_dim;
  const tokensPerRole: number = manifest.tokens_per_role;
  const roles: { name: string; tokens: string[] }[] = manifest.roles;
  if (!Array.isArray(roles) || !Number.isInteger(d) || !Number.isInteger(tokensPerRole)) {
    throw new MalformedAdapterError("manifest missing fields");
  }
  const payload = raw.subarray(12 + headerLength);
  if (payload.length !== roles.length * tokensPerRole * d * 4) {
    throw new MalformedAdapterError("payload length does not match manifest");
  }
  const digest = createHash("sha256").update(payload).digest("hex");
  if (digest !== manifest.payload_sha256) {
    throw new FingerprintMismatchError("payload checksum mismatch; corrupted or tampered");
  }
  const tokens = new Map<string, string[]>();
  const embeddings = new Map<string, number[][]>();
  roles.forEach((spec, index) => {
    tokens.set(spec.name, spec.tokens);
    const rows: number[][] = [];
    const base = index * tokensPerRole * d * 4;
    for (let i = 0; i < tokensPerRole; i++) {
      const row: number[] = [];
      for (let j = 0; j < d; j++) row.push(payload.readFloatLE(base + (i * d + j) * 4));
      rows.push(row);
    }
    embeddings.set(spec.name, rows);
  });
  return {
    modelFingerprint: manifest.model_fingerprint,
    embeddingDim: d,
    tokensPerRole,
    tokens,
    embeddings,
  };
}

/** Round-trip check against the producing model's backbone fingerprint. */
export function loadAndVerify(path: string, model: ToyLM): AdapterData {
  const adapter = readAdapter(path);
  if (adapter.modelFingerprint !== model.backboneChecksum()) {
    throw new FingerprintMismatchError(
      "adapter was trained against a different backbone",
    );
  }
  return adapter;
}
