export class TokenCollisionError extends Error {
  constructor(literal: string) {
    super(`token literal already in vocabulary: ${literal}`);
    this.name = "TokenCollisionError";
  }
}

export class SampleSchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SampleSchemaError";
  }
}

export class NonFiniteLossError extends Error {
  constructor(step: number, value: number) {
    super(`loss became non-finite at step ${step}: ${value}`);
    this.name = "NonFiniteLossError";
  }
}

export class FingerprintMismatchError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "FingerprintMismatchError";
  }
}

export class MalformedAdapterError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedAdapterError";
  }
}
