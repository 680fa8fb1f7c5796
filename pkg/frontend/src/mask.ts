/**
 * Paintable binary mask raster. Strokes are circles stamped along line
 * segments between successive points — deterministic, so an exported mask
 * re-imported always renders identically.
 */
import { decodeGrayPng, encodeGrayPng } from "./png.js";

export interface StrokePoint {
  x: number;
  y: number;
}

export interface Stroke {
  points: StrokePoint[];
  radius: number;
  erase?: boolean;
}

export class MaskRaster {
  readonly width: number;
  readonly height: number;
  /** 0 = clear, 1 = set; row-major */
  readonly data: Uint8Array;

  constructor(width: number, height: number, data?: Uint8Array) {
    if (width < 1 || height < 1 || !Number.isInteger(width) || !Number.isInteger(height)) {
      throw new Error("mask dimensions must be positive integers");
    }
    if (data !== undefined && data.length !== width * height) {
      throw new Error("pixel buffer does not match dimensions");
    }
    this.width = width;
    this.height = height;
    this.data = data ?? new Uint8Array(width * height);
  }

  isEmpty(): boolean {
    return !this.data.some((v) => v !== 0);
  }

  count(): number {
    let n = 0;
    for (const v of this.data) if (v) n++;
    return n;
  }

  get(x: number, y: number): boolean {
    return this.data[y * this.width + x] === 1;
  }

  clone(): MaskRaster {
    return new MaskRaster(this.width, this.height, this.data.slice());
  }

  clear(): void {
    this.data.fill(0);
  }

  private stamp(cx: number, cy: number, radius: number, value: 0 | 1): void {
    const r = Math.max(0, radius);
    const x0 = Math.max(0, Math.floor(cx - r));
    const x1 = Math.min(this.width - 1, Math.ceil(cx + r));
    const y0 = Math.max(0, Math.floor(cy - r));
    const y1 = Math.min(this.height - 1, Math.ceil(cy + r));
    const r2 = r * r;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  paintStroke(stroke: Stroke): void {
    const value: 0 | 1 = stroke.erase ? 0 : 1;
    const pts = stroke.points;
    if (pts.length === 0) return;
    this.stamp(pts[0]!.x, pts[0]!.y, stroke.radius, value);
    for (let i = 1; i < pts.length; i++) {
      const a = pts[i - 1]!;
      const b = pts[i]!;
      const dist = Math.hypot(b.x - a.x, b.y - a.y);
      const steps = Math.max(1, Math.ceil(dist));
      for (let s = 1; s <= steps; s++) {
        const t = s / steps;
        this.stamp(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), stroke.radius, value);
      }
    }
  }

  /** Export as an 8-bit grayscale PNG (0 / 255), the server's mask format. */
  toPng(): Uint8Array {
    const bytes = new Uint8Array(this.data.length);
    for (let i = 0; i < this.data.length; i++) {
      bytes[i] = this.data[i] ? 255 : 0;
    }
    return encodeGrayPng({ width: this.width, height: this.height, data: bytes });
  }

  /** Any nonzero pixel counts as set, mirroring the server's ingest rule. */
  static fromPng(bytes: Uint8Array): MaskRaster {
    const img = decodeGrayPng(bytes);
    const data = new Uint8Array(img.data.length);
    for (let i = 0; i < img.data.length; i++) {
      data[i] = img.data[i] ? 1 : 0;
    }
    return new MaskRaster(img.width, img.height, data);
  }

  equals(other: MaskRaster): boolean {
    if (other.width !== this.width || other.height !== this.height) return false;
    for (let i = 0; i < this.data.length; i++) {
      if (this.data[i] !== other.data[i]) return false;
    }
    return true;
  }
}
