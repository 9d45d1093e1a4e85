export { Mat } from "./tensor.js";
export { Rng } from "./rng.js";
export { Tokenizer, roleTokenLiteral, END_OF_ANSWER } from "./tokenizer.js";
export {
  ToyLM,
  DEFAULT_MODEL,
  type ModelConfig,
  type ParamCensus,
  type EncodedSample,
} from "./model.js";
export {
  ROLES,
  encodeSample,
  loadSampleDir,
  parseSampleFile,
  type TrainingSample,
} from "./data.js";
export { RowAdam, type AdamConfig } from "./optimizer.js";
export { train, DEFAULT_TRAIN, type TrainConfig, type TrainResult } from "./train.js";
export { exportAdapter, readAdapter, loadAndVerify, type AdapterData } from "./adapter.js";
export {
  TokenCollisionError,
  SampleSchemaError,
  NonFiniteLossError,
  FingerprintMismatchError,
  MalformedAdapterError,
} from "./errors.js";
