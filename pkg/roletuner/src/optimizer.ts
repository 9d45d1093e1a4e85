import { Mat } from "./tensor.js";

export interface AdamConfig {
  learningRate: number;
  warmupRatio: number;
  totalSteps: number;
  beta1?: number;
  beta2?: number;
  epsilon?: number;
}

/**
 * Adam over the trainable embedding block only. Rows below ``rowStart``
 * belong to the frozen backbone and are never read or written, so a
 * backbone update is impossible by construction.
 */
export class RowAdam {
  private m: Float64Array;
  private v: Float64Array;
  private step = 0;
  private readonly beta1: number;
  private readonly beta2: number;
  private readonly epsilon: number;

  constructor(
    private readonly rowStart: number,
    rowCount: number,
    private readonly dim: number,
    private readonly config: AdamConfig,
  ) {
    this.m = new Float64Array(rowCount * dim);
    this.v = new Float64Array(rowCount * dim);
    this.beta1 = config.beta1 ?? 0.9;
    this.beta2 = config.beta2 ?? 0.999;
    this.epsilon = config.epsilon ?? 1e-8;
  }

  /** Linear warmup to the configured rate, then constant. */
  currentRate(): number {
    const warmupSteps = Math.max(1, Math.round(this.config.warmupRatio * this.config.totalSteps));
    const scale = this.step < warmupSteps ? (this.step + 1) / warmupSteps : 1;
    return this.config.learningRate * scale;
  }

  apply(embedding: Mat, gradEmbedding: Mat): void {
    const rate = this.currentRate();
    this.step += 1;
    const correction1 = 1 - Math.pow(this.beta1, this.step);
    const correction2 = 1 - Math.pow(this.beta2, this.step);
    const offset = this.rowStart * this.dim;
    for (let i = 0; i < this.m.length; i++) {
      const g = gradEmbedding.data[offset + i];
      this.m[i] = this.beta1 * this.m[i] + (1 - this.beta1) * g;
      this.v[i] = this.beta2 * this.v[i] + (1 - this.beta2) * g * g;
      const mHat = this.m[i] / correction1;
      const vHat = this.v[i] / correction2;
      embedding.data[offset + i] -= (rate * mHat) / (Math.sqrt(vHat) + this.epsilon);
    }
  }
}
