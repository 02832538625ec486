/** Binary PGM/PPM codec plus base64 helpers (browser- and node-safe). */

export interface PnmImage {
  width: number;
  height: number;
  channels: 1 | 3;
  data: Uint8Array; // row-major, length w*h*channels
}

export function encodePgm(width: number, height: number, gray: Uint8Array): Uint8Array {
  if (gray.length !== width * height) {
    throw new Error(`pgm payload ${gray.length} != ${width}x${height}`);
  }
  const header = new TextEncoder().encode(`P5\n${width} ${height}\n255\n`);
  const out = new Uint8Array(header.length + gray.length);
  out.set(header);
  out.set(gray, header.length);
  return out;
}

export function decodePnm(bytes: Uint8Array): PnmImage {
  const magic = String.fromCharCode(bytes[0] ?? 0, bytes[1] ?? 0);
  if (magic !== "P5" && magic !== "P6") {
    throw new Error(`not a binary PGM/PPM (magic ${magic})`);
  }
  const channels = magic === "P5" ? 1 : 3;
  const fields: number[] = [];
  let i = 2;
  while (fields.length < 3) {
    if (i >= bytes.length) throw new Error("truncated PNM header");
    const c = bytes[i];
    if (c === 0x23) {
      // '#' comment to end of line
      while (i < bytes.length && bytes[i] !== 0x0a) i++;
    } else if (c === 0x20 || c === 0x09 || c === 0x0a || c === 0x0d) {
      i++;
    } else {
      let j = i;
      let value = 0;
      while (j < bytes.length && bytes[j] >= 0x30 && bytes[j] <= 0x39) {
        value = value * 10 + (bytes[j] - 0x30);
        j++;
      }
      if (j === i) throw new Error("bad PNM header token");
      fields.push(value);
      i = j;
    }
  }
  i++; // single whitespace byte after maxval
  const [width, height, maxval] = fields;
  if (maxval !== 255) throw new Error(`unsupported PNM maxval ${maxval}`);
  const need = width * height * channels;
  if (bytes.length - i < need) throw new Error("PNM payload too short");
  return { width, height, channels: channels as 1 | 3, data: bytes.slice(i, i + need) };
}

export function bytesToBase64(bytes: Uint8Array): string {
  let binary = "";
  const chunk = 0x8000;
  for (let i = 0; i < bytes.length; i += chunk) {
    binary += String.fromCharCode(...bytes.subarray(i, i + chunk));
  }
  return btoa(binary);
}

export function base64ToBytes(b64: string): Uint8Array {
  const binary = atob(b64);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) out[i] = binary.charCodeAt(i);
  return out;
}

export function maskToDataUrl(width: number, height: number, gray: Uint8Array): string {
  return "data:image/x-portable-graymap;base64," + bytesToBase64(encodePgm(width, height, gray));
}

export function dataUrlToPnm(url: string): PnmImage {
  const comma = url.indexOf(",");
  if (!url.startsWith("data:") || comma < 0) throw new Error("not a data URL");
  return decodePnm(base64ToBytes(url.slice(comma + 1)));
}
