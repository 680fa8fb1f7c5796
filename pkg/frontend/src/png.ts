/**
 * Minimal grayscale PNG codec (8-bit, colour type 0) using uncompressed
 * ("stored") deflate blocks. Every PNG reader accepts stored blocks, so the
 * exported masks are exactly what the server ingests, with no canvas or
 * zlib dependency. The decoder handles the same stored-block subset, which
 * is all the round-trip contract needs.
 */

const PNG_SIGNATURE = new Uint8Array([137, 80, 78, 71, 13, 10, 26, 10]);

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let n = 0; n < 256; n++) {
    let c = n;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[n] = c >>> 0;
  }
  return table;
})();

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]!) & 0xff]! ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]!) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(value: number): Uint8Array {
  return new Uint8Array([
    (value >>> 24) & 0xff, (value >>> 16) & 0xff,
    (value >>> 8) & 0xff, value & 0xff,
  ]);
}

function concat(parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const p of parts) {
    out.set(p, offset);
    offset += p.length;
  }
  return out;
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typeBytes = new Uint8Array([...type].map((c) => c.charCodeAt(0)));
  const body = concat([typeBytes, data]);
  return concat([u32be(data.length), body, u32be(crc32(body))]);
}

/** zlib stream holding the payload in stored (uncompressed) deflate blocks. */
function zlibStored(payload: Uint8Array): Uint8Array {
  const parts: Uint8Array[] = [new Uint8Array([0x78, 0x01])];
  const max = 65535;
  for (let offset = 0; offset < payload.length || offset === 0; offset += max) {
    const block = payload.subarray(offset, Math.min(offset + max, payload.length));
    const final = offset + max >= payload.length ? 1 : 0;
    const len = block.length;
    parts.push(new Uint8Array([
      final, len & 0xff, (len >>> 8) & 0xff,
      ~len & 0xff, (~len >>> 8) & 0xff,
    ]));
    parts.push(block);
    if (payload.length === 0) break;
  }
  parts.push(u32be(adler32(payload)));
  return concat(parts);
}

function inflateStored(stream: Uint8Array): Uint8Array {
  // skip the 2-byte zlib header; parse stored blocks only
  let pos = 2;
  const parts: Uint8Array[] = [];
  for (;;) {
    const header = stream[pos];
    if (header === undefined) throw new Error("truncated deflate stream");
    if ((header & 0x06) !== 0) {
      throw new Error("unsupported: compressed deflate block");
    }
    const len = stream[pos + 1]! | (stream[pos + 2]! << 8);
    const start = pos + 5;
    parts.push(stream.subarray(start, start + len));
    pos = start + len;
    if (header & 1) break;
  }
  return concat(parts);
}

export interface GrayImage {
  width: number;
  height: number;
  /** row-major 8-bit samples, length = width * height */
  data: Uint8Array;
}

export function encodeGrayPng(img: GrayImage): Uint8Array {
  const { width, height, data } = img;
  if (data.length !== width * height) {
    throw new Error("pixel buffer does not match dimensions");
  }
  // filter byte 0 (None) per scanline
  const raw = new Uint8Array(height * (width + 1));
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0;
    raw.set(data.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const ihdr = concat([
    u32be(width), u32be(height),
    new Uint8Array([8, 0, 0, 0, 0]), // 8-bit grayscale, deflate, no interlace
  ]);
  return concat([
    PNG_SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ]);
}

export function decodeGrayPng(bytes: Uint8Array): GrayImage {
  for (let i = 0; i < PNG_SIGNATURE.length; i++) {
    if (bytes[i] !== PNG_SIGNATURE[i]) throw new Error("not a PNG");
  }
  let pos = 8;
  let width = 0;
  let height = 0;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = (bytes[pos]! << 24) | (bytes[pos + 1]! << 16) |
                (bytes[pos + 2]! << 8) | bytes[pos + 3]!;
    const type = String.fromCharCode(
      bytes[pos + 4]!, bytes[pos + 5]!, bytes[pos + 6]!, bytes[pos + 7]!);
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = (data[0]! << 24) | (data[1]! << 16) | (data[2]! << 8) | data[3]!;
      height = (data[4]! << 24) | (data[5]! << 16) | (data[6]! << 8) | data[7]!;
      if (data[8] !== 8 || data[9] !== 0) {
        throw new Error("unsupported: only 8-bit grayscale PNGs");
      }
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 8 + len + 4;
  }
  const raw = inflateStored(concat(idat));
  const out = new Uint8Array(width * height);
  for (let y = 0; y < height; y++) {
    if (raw[y * (width + 1)] !== 0) {
      throw new Error("unsupported: filtered scanline");
    }
    out.set(raw.subarray(y * (width + 1) + 1, (y + 1) * (width + 1)), y * width);
  }
  return { width, height, data: out };
}
