// Canonical binary encoding, byte-compatible with the server's codec:
// big-endian fixed-width integers, u32-length-prefixed byte strings,
// fields in declared order. See docs/wire-formats.md in the repo root.

export function u16(value: number): Uint8Array {
  if (value < 0 || value > 0xffff) throw new Error(`u16 out of range: ${value}`);
  return new Uint8Array([value >>> 8, value & 0xff]);
}

export function u32(value: number): Uint8Array {
  if (value < 0 || value > 0xffffffff) throw new Error(`u32 out of range: ${value}`);
  const out = new Uint8Array(4);
  new DataView(out.buffer).setUint32(0, value);
  return out;
}

export function u64(value: bigint | number): Uint8Array {
  const v = BigInt(value);
  if (v < 0n || v > 0xffffffffffffffffn) throw new Error(`u64 out of range: ${v}`);
  const out = new Uint8Array(8);
  new DataView(out.buffer).setBigUint64(0, v);
  return out;
}

export function bstr(data: Uint8Array): Uint8Array {
  return concat(u32(data.length), data);
}

export function concat(...parts: Uint8Array[]): Uint8Array {
  const total = parts.reduce((n, p) => n + p.length, 0);
  const out = new Uint8Array(total);
  let offset = 0;
  for (const part of parts) {
    out.set(part, offset);
    offset += part.length;
  }
  return out;
}

export function toHex(data: Uint8Array): string {
  return [...data].map((b) => b.toString(16).padStart(2, "0")).join("");
}

export function fromHex(hex: string): Uint8Array {
  if (hex.length % 2 !== 0 || /[^0-9a-fA-F]/.test(hex)) {
    throw new Error("not a hex string");
  }
  const out = new Uint8Array(hex.length / 2);
  for (let i = 0; i < out.length; i++) {
    out[i] = parseInt(hex.slice(2 * i, 2 * i + 2), 16);
  }
  return out;
}

export function utf8(text: string): Uint8Array {
  return new TextEncoder().encode(text);
}

export class Reader {
  private pos = 0;
  constructor(private data: Uint8Array) {}

  remaining(): number {
    return this.data.length - this.pos;
  }

  take(n: number): Uint8Array {
    if (n < 0 || this.remaining() < n) throw new Error("truncated input");
    const chunk = this.data.subarray(this.pos, this.pos + n);
    this.pos += n;
    return chunk;
  }

  u32(): number {
    const chunk = this.take(4);
    return new DataView(chunk.buffer, chunk.byteOffset, 4).getUint32(0);
  }

  bstr(): Uint8Array {
    return this.take(this.u32());
  }

  expectEnd(): void {
    if (this.remaining() !== 0) throw new Error("trailing bytes");
  }
}
