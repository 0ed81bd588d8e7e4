/**
 * arrayview.ts — dense row-major tensors and boundary validation.
 *
 * A TensorView pairs a typed buffer with a shape; every kernel wrapper
 * validates dtype, rank, and shape agreement here before any file is
 * written or process spawned, so bad inputs never reach the CLI.
 */

export type Dtype = "float32" | "uint8";

export interface TensorView {
  readonly data: Float32Array | Uint8Array;
  readonly shape: readonly number[];
}

/** Thrown when inputs violate a kernel's contract at the boundary. */
export class BoundaryError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BoundaryError";
  }
}

export const MAX_RANK = 4;

export function numel(shape: readonly number[]): number {
  return shape.reduce((acc, d) => acc * d, 1);
}

function checkShape(shape: readonly number[], what: string): void {
  if (shape.length === 0) {
    throw new BoundaryError(`${what}: zero-dimensional shapes are not supported`);
  }
  if (shape.length > MAX_RANK) {
    throw new BoundaryError(
      `${what}: rank ${shape.length} exceeds the maximum of ${MAX_RANK}`,
    );
  }
  for (const d of shape) {
    if (!Number.isInteger(d) || d <= 0) {
      throw new BoundaryError(`${what}: bad dimension ${d} in shape (${shape})`);
    }
  }
}

/** Wrap an existing buffer; validates that shape and length agree. */
export function tensor(
  data: Float32Array | Uint8Array,
  shape: readonly number[],
  what = "tensor",
): TensorView {
  checkShape(shape, what);
  if (data.length !== numel(shape)) {
    throw new BoundaryError(
      `${what}: buffer holds ${data.length} values, shape (${shape}) needs ${numel(shape)}`,
    );
  }
  return { data, shape: [...shape] };
}

export function f32(values: ArrayLike<number>, shape: readonly number[]): TensorView {
  return tensor(Float32Array.from(values), shape);
}

export function u8(values: ArrayLike<number>, shape: readonly number[]): TensorView {
  return tensor(Uint8Array.from(values), shape);
}

export function dtypeOf(view: TensorView): Dtype {
  return view.data instanceof Float32Array ? "float32" : "uint8";
}

export function expectDtype(view: TensorView, dtype: Dtype, what: string): void {
  if (dtypeOf(view) !== dtype) {
    throw new BoundaryError(`${what} must be ${dtype}, got ${dtypeOf(view)}`);
  }
}

export function expectRank(view: TensorView, ranks: readonly number[], what: string): void {
  if (!ranks.includes(view.shape.length)) {
    throw new BoundaryError(
      `${what} must have rank in {${ranks}}, got shape (${view.shape})`,
    );
  }
}

export function expectSameShape(a: TensorView, b: TensorView, an: string, bn: string): void {
  if (a.shape.length !== b.shape.length ||
      a.shape.some((d, i) => d !== b.shape[i])) {
    throw new BoundaryError(
      `${an} shape (${a.shape}) does not match ${bn} shape (${b.shape})`,
    );
  }
}

export function expectMinLastDim(view: TensorView, min: number, what: string): void {
  const last = view.shape[view.shape.length - 1]!;
  if (last < min) {
    throw new BoundaryError(
      `${what} needs at least ${min} entries along the last axis, got ${last}`,
    );
  }
}
