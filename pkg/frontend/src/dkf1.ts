/** Parser for the DKF1 binary field container (little-endian f32 payload). */

export interface FieldData {
  width: number;
  height: number;
  channels: number;
  values: Float32Array;
}

export function parseDkf1(bytes: Uint8Array): FieldData {
  const magic = String.fromCharCode(...bytes.subarray(0, 4));
  if (magic !== "DKF1") throw new Error(`bad field magic ${magic}`);
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  const width = view.getUint32(4, true);
  const height = view.getUint32(8, true);
  const channels = view.getUint32(12, true);
  const count = width * height * channels;
  if (bytes.length < 16 + count * 4) throw new Error("field payload too short");
  const values = new Float32Array(count);
  for (let i = 0; i < count; i++) values[i] = view.getFloat32(16 + i * 4, true);
  return { width, height, channels, values };
}

/** The (dx, dy) vector stored for token cell (x, y); zero off-field. */
export function fieldVec(field: FieldData, x: number, y: number): [number, number] {
  const base = (y * field.width + x) * field.channels;
  return [field.values[base], field.values[base + 1]];
}
