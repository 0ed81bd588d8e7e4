/**
 * npy.ts — NPY v1.0 encode/decode for the CLI's tensor dialect.
 *
 * Only the subset the evidfuse CLI accepts: version 1.0, C order,
 * little-endian float32 ('<f4') or uint8 ('|u1'), rank 1 to 4. The
 * writer pads headers so the payload starts on a 64-byte boundary,
 * byte-identical to numpy's own v1.0 writer.
 */

import { BoundaryError, TensorView, dtypeOf, numel, tensor } from "./arrayview.js";

const MAGIC = Uint8Array.from([0x93, 0x4e, 0x55, 0x4d, 0x50, 0x59]);
const ALIGN = 64;

/** Thrown when bytes do not parse as an acceptable tensor file. */
export class NpyFormatError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NpyFormatError";
  }
}

function descrFor(view: TensorView): string {
  return dtypeOf(view) === "float32" ? "<f4" : "|u1";
}

function shapeLiteral(shape: readonly number[]): string {
  return shape.length === 1 ? `(${shape[0]},)` : `(${shape.join(", ")})`;
}

export function encodeNpy(view: TensorView): Uint8Array {
  const dict =
    `{'descr': '${descrFor(view)}', 'fortran_order': False, ` +
    `'shape': ${shapeLiteral(view.shape)}, }`;
  // magic(6) + version(2) + headerLen(2) + dict + padding + newline,
  // padded so the total is a multiple of 64
  const unpadded = MAGIC.length + 2 + 2 + dict.length + 1;
  const padding = (ALIGN - (unpadded % ALIGN)) % ALIGN;
  const headerText = dict + " ".repeat(padding) + "\n";

  const out = new Uint8Array(MAGIC.length + 4 + headerText.length + view.data.byteLength);
  const dv = new DataView(out.buffer);
  out.set(MAGIC, 0);
  out[6] = 1;
  out[7] = 0;
  dv.setUint16(8, headerText.length, true);
  for (let i = 0; i < headerText.length; i++) {
    out[10 + i] = headerText.charCodeAt(i);
  }
  // write the payload explicitly little-endian, independent of the host
  const base = 10 + headerText.length;
  if (view.data instanceof Float32Array) {
    for (let i = 0; i < view.data.length; i++) {
      dv.setFloat32(base + 4 * i, view.data[i]!, true);
    }
  } else {
    out.set(view.data, base);
  }
  return out;
}

const HEADER_RE =
  /^\{'descr': '([^']+)', 'fortran_order': (True|False), 'shape': \(([0-9, ]*)\), \} *\n$/;

function parseShape(text: string): number[] {
  const parts = text.split(",").map((p) => p.trim()).filter((p) => p.length > 0);
  if (parts.length === 0) {
    throw new NpyFormatError("zero-dimensional tensors are not supported");
  }
  return parts.map((p) => {
    const d = Number(p);
    if (!Number.isInteger(d) || d <= 0) {
      throw new NpyFormatError(`bad dimension '${p}' in header shape`);
    }
    return d;
  });
}

export function decodeNpy(bytes: Uint8Array): TensorView {
  if (bytes.length < 10 || !MAGIC.every((m, i) => bytes[i] === m)) {
    throw new NpyFormatError("not a tensor file: bad magic");
  }
  const major = bytes[6];
  const minor = bytes[7];
  if (major !== 1 || minor !== 0) {
    throw new NpyFormatError(`unsupported format version ${major}.${minor}`);
  }
  const headerLen = new DataView(bytes.buffer, bytes.byteOffset).getUint16(8, true);
  if (bytes.length < 10 + headerLen) {
    throw new NpyFormatError("truncated header");
  }
  let headerText = "";
  for (let i = 0; i < headerLen; i++) {
    headerText += String.fromCharCode(bytes[10 + i]!);
  }
  const match = HEADER_RE.exec(headerText);
  if (match === null) {
    throw new NpyFormatError(`unrecognized header: ${headerText.trim()}`);
  }
  const [, descr, fortran, shapeText] = match;
  if (fortran === "True") {
    throw new NpyFormatError("Fortran-order tensors are not supported");
  }
  if (descr !== "<f4" && descr !== "|u1") {
    throw new NpyFormatError(`unsupported dtype ${descr}`);
  }
  const shape = parseShape(shapeText!);
  if (shape.length > 4) {
    throw new NpyFormatError(`rank ${shape.length} exceeds the maximum of 4`);
  }

  const itemSize = descr === "<f4" ? 4 : 1;
  const expected = numel(shape) * itemSize;
  const payload = bytes.subarray(10 + headerLen);
  if (payload.length !== expected) {
    throw new NpyFormatError(
      `payload holds ${payload.length} bytes, header promises ${expected}`,
    );
  }

  // copy out of the file buffer so views never alias transient reads,
  // decoding floats explicitly little-endian regardless of the host
  let data: Float32Array | Uint8Array;
  if (descr === "<f4") {
    const count = numel(shape);
    const floats = new Float32Array(count);
    const dv = new DataView(bytes.buffer, bytes.byteOffset + 10 + headerLen, expected);
    for (let i = 0; i < count; i++) {
      const v = dv.getFloat32(4 * i, true);
      if (!Number.isFinite(v)) {
        throw new NpyFormatError("payload contains non-finite values");
      }
      floats[i] = v;
    }
    data = floats;
  } else {
    data = payload.slice();
  }
  try {
    return tensor(data, shape);
  } catch (err) {
    if (err instanceof BoundaryError) {
      throw new NpyFormatError(err.message);
    }
    throw err;
  }
}
