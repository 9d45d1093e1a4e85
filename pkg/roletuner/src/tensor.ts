/** Minimal dense float64 matrix math; everything the toy LM needs. */

export class Mat {
  constructor(
    public readonly rows: number,
    public readonly cols: number,
    public readonly data: Float64Array = new Float64Array(rows * cols),
  ) {
    if (data.length !== rows * cols) {
      throw new Error(`shape mismatch: ${rows}x${cols} vs ${data.length} values`);
    }
  }

  get(i: number, j: number): number {
    return this.data[i * this.cols + j];
  }

  set(i: number, j: number, v: number): void {
    this.data[i * this.cols + j] = v;
  }

  row(i: number): Float64Array {
    return this.data.subarray(i * this.cols, (i + 1) * this.cols);
  }

  clone(): Mat {
    return new Mat(this.rows, this.cols, new Float64Array(this.data));
  }

  static zeros(rows: number, cols: number): Mat {
    return new Mat(rows, cols);
  }
}

/** C = A x B */
export function matmul(a: Mat, b: Mat): Mat {
  if (a.cols !== b.rows) throw new Error(`matmul: ${a.cols} != ${b.rows}`);
  const c = Mat.zeros(a.rows, b.cols);
  for (let i = 0; i < a.rows; i++) {
    for (let k = 0; k < a.cols; k++) {
      const aik = a.data[i * a.cols + k];
      if (aik === 0) continue;
      const bRow = k * b.cols;
      const cRow = i * c.cols;
      for (let j = 0; j < b.cols; j++) {
        c.data[cRow + j] += aik * b.data[bRow + j];
      }
    }
  }
  return c;
}

/** C = A^T x B */
export function matmulT1(a: Mat, b: Mat): Mat {
  if (a.rows !== b.rows) throw new Error(`matmulT1: ${a.rows} != ${b.rows}`);
  const c = Mat.zeros(a.cols, b.cols);
  for (let k = 0; k < a.rows; k++) {
    const aRow = k * a.cols;
    const bRow = k * b.cols;
    for (let i = 0; i < a.cols; i++) {
      const aki = a.data[aRow + i];
      if (aki === 0) continue;
      const cRow = i * c.cols;
      for (let j = 0; j < b.cols; j++) {
        c.data[cRow + j] += aki * b.data[bRow + j];
      }
    }
  }
  return c;
}

/** C = A x B^T */
export function matmulT2(a: Mat, b: Mat): Mat {
  if (a.cols !== b.cols) throw new Error(`matmulT2: ${a.cols} != ${b.cols}`);
  const c = Mat.zeros(a.rows, b.rows);
  for (let i = 0; i < a.rows; i++) {
    const aRow = i * a.cols;
    for (let j = 0; j < b.rows; j++) {
      const bRow = j * b.cols;
      let sum = 0;
      for (let k = 0; k < a.cols; k++) sum += a.data[aRow + k] * b.data[bRow + k];
      c.data[i * c.cols + j] = sum;
    }
  }
  return c;
}

export function addInPlace(target: Mat, other: Mat): void {
  for (let i = 0; i < target.data.length; i++) target.data[i] += other.data[i];
}

export function addRowVectorInPlace(target: Mat, bias: Float64Array): void {
  for (let i = 0; i < target.rows; i++) {
    const row = i * target.cols;
    for (let j = 0; j < target.cols; j++) target.data[row + j] += bias[j];
  }
}

export function tanhInPlace(target: Mat): void {
  for (let i = 0; i < target.data.length; i++) target.data[i] = Math.tanh(target.data[i]);
}
