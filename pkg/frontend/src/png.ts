/**
 * Minimal PNG codec, enough for the studio's traffic with the server.
 *
 * Encode: palette-indexed images only (scribble uploads). The IDAT stream
 * uses stored deflate blocks, so the bytes produced for a given label
 * grid are deterministic across browsers and test runs.
 *
 * Decode: non-interlaced 8-bit gray / RGB / RGBA / indexed plus 16-bit
 * gray, which covers every image the server emits (masks, map channels,
 * previews, scribbles). Inflate rides on DecompressionStream, available
 * in browsers and node alike.
 */

const SIGNATURE = [137, 80, 78, 71, 13, 10, 26, 10];

const CRC_TABLE = new Uint32Array(256);
for (let n = 0; n < 256; n++) {
  let c = n;
  for (let k = 0; k < 8; k++) {
    c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
  }
  CRC_TABLE[n] = c >>> 0;
}

function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

function adler32(bytes: Uint8Array): number {
  let a = 1;
  let b = 0;
  for (let i = 0; i < bytes.length; i++) {
    a = (a + bytes[i]) % 65521;
    b = (b + a) % 65521;
  }
  return ((b << 16) | a) >>> 0;
}

function u32be(v: number): number[] {
  return [(v >>> 24) & 0xff, (v >>> 16) & 0xff, (v >>> 8) & 0xff, v & 0xff];
}

function chunk(type: string, data: Uint8Array): Uint8Array {
  const typed = new Uint8Array(4 + data.length);
  for (let i = 0; i < 4; i++) typed[i] = type.charCodeAt(i);
  typed.set(data, 4);
  const out = new Uint8Array(8 + data.length + 4);
  out.set(u32be(data.length), 0);
  out.set(typed, 4);
  out.set(u32be(crc32(typed)), 8 + data.length);
  return out;
}

/** zlib wrapper around stored (uncompressed) deflate blocks. */
function zlibStored(data: Uint8Array): Uint8Array {
  const blocks: Uint8Array[] = [];
  const max = 65535;
  let off = 0;
  do {
    const len = Math.min(max, data.length - off);
    const last = off + len >= data.length ? 1 : 0;
    const head = new Uint8Array(5);
    head[0] = last;
    head[1] = len & 0xff;
    head[2] = (len >>> 8) & 0xff;
    head[3] = ~len & 0xff;
    head[4] = (~len >>> 8) & 0xff;
    blocks.push(head, data.subarray(off, off + len));
    off += len;
  } while (off < data.length);
  let total = 2 + 4;
  for (const b of blocks) total += b.length;
  const out = new Uint8Array(total);
  out[0] = 0x78;
  out[1] = 0x01;
  let pos = 2;
  for (const b of blocks) {
    out.set(b, pos);
    pos += b.length;
  }
  out.set(u32be(adler32(data)), pos);
  return out;
}

export type Rgb = [number, number, number];

/**
 * Encode an 8-bit palette-indexed PNG. `pixels` is row-major, one palette
 * index per pixel; `palette` is padded with black to 256 entries so the
 * file layout does not depend on how many colors are actually used.
 */
export function encodeIndexedPng(
  width: number,
  height: number,
  pixels: Uint8Array,
  palette: Rgb[],
): Uint8Array {
  if (pixels.length !== width * height) {
    throw new Error(`pixel count ${pixels.length} != ${width}x${height}`);
  }
  const ihdr = new Uint8Array(13);
  ihdr.set(u32be(width), 0);
  ihdr.set(u32be(height), 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 3; // color type: indexed
  const plte = new Uint8Array(256 * 3);
  for (let i = 0; i < Math.min(palette.length, 256); i++) {
    plte[i * 3] = palette[i][0];
    plte[i * 3 + 1] = palette[i][1];
    plte[i * 3 + 2] = palette[i][2];
  }
  const raw = new Uint8Array((width + 1) * height);
  for (let y = 0; y < height; y++) {
    raw[y * (width + 1)] = 0; // filter: none
    raw.set(pixels.subarray(y * width, (y + 1) * width), y * (width + 1) + 1);
  }
  const parts = [
    new Uint8Array(SIGNATURE),
    chunk("IHDR", ihdr),
    chunk("PLTE", plte),
    chunk("IDAT", zlibStored(raw)),
    chunk("IEND", new Uint8Array(0)),
  ];
  let total = 0;
  for (const p of parts) total += p.length;
  const out = new Uint8Array(total);
  let pos = 0;
  for (const p of parts) {
    out.set(p, pos);
    pos += p.length;
  }
  return out;
}

export interface DecodedPng {
  width: number;
  height: number;
  bitDepth: number;
  colorType: number; // 0 gray, 2 rgb, 3 indexed, 6 rgba
  channels: number;
  /** Unfiltered scanline bytes, 16-bit samples big-endian. */
  data: Uint8Array;
  palette: Uint8Array | null;
}

async function inflate(data: Uint8Array): Promise<Uint8Array> {
  const ds = new DecompressionStream("deflate");
  const stream = new Blob([data as BlobPart]).stream().pipeThrough(ds);
  const buf = await new Response(stream).arrayBuffer();
  return new Uint8Array(buf);
}

const CHANNEL_COUNT: Record<number, number> = { 0: 1, 2: 3, 3: 1, 4: 2, 6: 4 };

export async function decodePng(bytes: Uint8Array): Promise<DecodedPng> {
  for (let i = 0; i < 8; i++) {
    if (bytes[i] !== SIGNATURE[i]) throw new Error("not a PNG file");
  }
  const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  let pos = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  let palette: Uint8Array | null = null;
  const idat: Uint8Array[] = [];
  while (pos < bytes.length) {
    const len = view.getUint32(pos);
    const type = String.fromCharCode(
      bytes[pos + 4], bytes[pos + 5], bytes[pos + 6], bytes[pos + 7]);
    const data = bytes.subarray(pos + 8, pos + 8 + len);
    if (type === "IHDR") {
      width = view.getUint32(pos + 8);
      height = view.getUint32(pos + 12);
      bitDepth = data[8];
      colorType = data[9];
      if (data[12] !== 0) throw new Error("interlaced PNG not supported");
      if (bitDepth !== 8 && !(bitDepth === 16 && colorType === 0)) {
        throw new Error(`unsupported depth ${bitDepth}/type ${colorType}`);
      }
    } else if (type === "PLTE") {
      palette = new Uint8Array(data);
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + len;
  }
  let zlen = 0;
  for (const d of idat) zlen += d.length;
  const zdata = new Uint8Array(zlen);
  let zpos = 0;
  for (const d of idat) {
    zdata.set(d, zpos);
    zpos += d.length;
  }
  const raw = await inflate(zdata);
  const channels = CHANNEL_COUNT[colorType];
  if (!channels) throw new Error(`unknown color type ${colorType}`);
  const bpp = channels * (bitDepth >> 3);
  const stride = width * bpp;
  const out = new Uint8Array(stride * height);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const row = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const dst = y * stride;
    const prev = (y - 1) * stride;
    for (let x = 0; x < stride; x++) {
      const a = x >= bpp ? out[dst + x - bpp] : 0;
      const b = y > 0 ? out[prev + x] : 0;
      const c = y > 0 && x >= bpp ? out[prev + x - bpp] : 0;
      let v = row[x];
      if (filter === 1) v += a;
      else if (filter === 2) v += b;
      else if (filter === 3) v += (a + b) >> 1;
      else if (filter === 4) {
        const p = a + b - c;
        const pa = Math.abs(p - a);
        const pb = Math.abs(p - b);
        const pc = Math.abs(p - c);
        v += pa <= pb && pa <= pc ? a : pb <= pc ? b : c;
      } else if (filter !== 0) {
        throw new Error(`bad scanline filter ${filter}`);
      }
      out[dst + x] = v & 0xff;
    }
  }
  return { width, height, bitDepth, colorType, channels, data: out, palette };
}

/** Palette indices of an indexed PNG, row-major. */
export function indexedPixels(png: DecodedPng): Uint8Array {
  if (png.colorType !== 3) throw new Error("not an indexed PNG");
  return png.data;
}

/** Grayscale samples scaled to [0,1]; accepts 8- and 16-bit gray. */
export function grayValues(png: DecodedPng): Float64Array {
  if (png.colorType !== 0) throw new Error("not a grayscale PNG");
  const n = png.width * png.height;
  const out = new Float64Array(n);
  if (png.bitDepth === 16) {
    for (let i = 0; i < n; i++) {
      out[i] = ((png.data[2 * i] << 8) | png.data[2 * i + 1]) / 65535;
    }
  } else {
    for (let i = 0; i < n; i++) out[i] = png.data[i] / 255;
  }
  return out;
}

/** RGB triplets for gray, RGB, RGBA, or palette images. */
export function rgbValues(png: DecodedPng): Uint8Array {
  const n = png.width * png.height;
  const out = new Uint8Array(n * 3);
  if (png.colorType === 2) {
    out.set(png.data);
  } else if (png.colorType === 6) {
    for (let i = 0; i < n; i++) {
      out[i * 3] = png.data[i * 4];
      out[i * 3 + 1] = png.data[i * 4 + 1];
      out[i * 3 + 2] = png.data[i * 4 + 2];
    }
  } else if (png.colorType === 0 && png.bitDepth === 8) {
    for (let i = 0; i < n; i++) {
      out[i * 3] = out[i * 3 + 1] = out[i * 3 + 2] = png.data[i];
    }
  } else if (png.colorType === 3) {
    const pal = png.palette;
    if (!pal) throw new Error("indexed PNG without a palette");
    for (let i = 0; i < n; i++) {
      const j = png.data[i] * 3;
      out[i * 3] = pal[j];
      out[i * 3 + 1] = pal[j + 1];
      out[i * 3 + 2] = pal[j + 2];
    }
  } else {
    throw new Error(`no RGB view for color type ${png.colorType}`);
  }
  return out;
}
