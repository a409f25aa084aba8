import { describe, expect, it } from "vitest";

import {
  MAX_TAKE_SECONDS,
  TARGET_RATE_HZ,
  durationSeconds,
  encodeWavPcm16,
  needsTrim,
  trimToLimit,
} from "../src/wav.js";

function tone(freq: number, seconds: number, rate = TARGET_RATE_HZ): Float32Array {
  const n = Math.round(seconds * rate);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i++) {
    out[i] = 0.4 * Math.sin((2 * Math.PI * freq * i) / rate);
  }
  return out;
}

describe("wav encoding", () => {
  it("writes a canonical 16-bit mono header", () => {
    const samples = tone(440, 0.5);
    const bytes = encodeWavPcm16(samples, TARGET_RATE_HZ);
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    const tag = (off: number) =>
      String.fromCharCode(bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]);

    expect(tag(0)).toBe("RIFF");
    expect(tag(8)).toBe("WAVE");
    expect(tag(12)).toBe("fmt ");
    expect(tag(36)).toBe("data");
    expect(view.getUint32(4, true)).toBe(36 + samples.length * 2);
    expect(view.getUint16(20, true)).toBe(1);
    expect(view.getUint16(22, true)).toBe(1);
    expect(view.getUint32(24, true)).toBe(TARGET_RATE_HZ);
    expect(view.getUint32(28, true)).toBe(TARGET_RATE_HZ * 2);
    expect(view.getUint16(32, true)).toBe(2);
    expect(view.getUint16(34, true)).toBe(16);
    expect(view.getUint32(40, true)).toBe(samples.length * 2);
    expect(bytes.length).toBe(44 + samples.length * 2);
  });

  it("quantizes each sample with round-to-nearest", () => {
    const samples = Float32Array.from([0, 0.25, -0.5, 1, -1, 0.123]);
    const bytes = encodeWavPcm16(samples, TARGET_RATE_HZ);
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    for (let i = 0; i < samples.length; i++) {
      expect(view.getInt16(44 + 2 * i, true)).toBe(Math.round(samples[i] * 32767));
    }
  });

  it("clamps overdriven samples to full scale", () => {
    const samples = Float32Array.from([1.7, -2.3]);
    const bytes = encodeWavPcm16(samples, TARGET_RATE_HZ);
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    expect(view.getInt16(44, true)).toBe(32767);
    expect(view.getInt16(46, true)).toBe(-32767);
  });

  it("round-trips a tone within one quantization step", () => {
    const samples = tone(523.25, 0.2);
    const bytes = encodeWavPcm16(samples, TARGET_RATE_HZ);
    const view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
    for (let i = 0; i < samples.length; i += 97) {
      const decoded = view.getInt16(44 + 2 * i, true) / 32768;
      expect(Math.abs(decoded - samples[i])).toBeLessThan(1 / 32767);
    }
  });

  it("rejects empty audio and bad rates", () => {
    expect(() => encodeWavPcm16(new Float32Array(0), TARGET_RATE_HZ)).toThrow(/empty/);
    expect(() => encodeWavPcm16(tone(440, 0.1), 0)).toThrow(/rate/);
    expect(() => encodeWavPcm16(tone(440, 0.1), -8000)).toThrow(/rate/);
  });
});

describe("take length limit", () => {
  it("measures duration from the sample count", () => {
    expect(durationSeconds(new Float32Array(44100), 44100)).toBeCloseTo(1.0, 12);
    expect(durationSeconds(new Float32Array(22050), 44100)).toBeCloseTo(0.5, 12);
  });

  it("flags takes at exactly the limit", () => {
    const atLimit = new Float32Array(MAX_TAKE_SECONDS * TARGET_RATE_HZ);
    const justUnder = new Float32Array(atLimit.length - 1);
    expect(needsTrim(atLimit, TARGET_RATE_HZ)).toBe(true);
    expect(needsTrim(justUnder, TARGET_RATE_HZ)).toBe(false);
  });

  it("trims an overlong take to strictly below the limit", () => {
    const long = tone(440, 3.4);
    const trimmed = trimToLimit(long, TARGET_RATE_HZ);
    expect(trimmed.length).toBe(Math.ceil(MAX_TAKE_SECONDS * TARGET_RATE_HZ) - 1);
    expect(durationSeconds(trimmed, TARGET_RATE_HZ)).toBeLessThan(MAX_TAKE_SECONDS);
    expect(Array.from(trimmed.subarray(0, 64))).toEqual(Array.from(long.subarray(0, 64)));
  });

  it("leaves short takes untouched", () => {
    const short = tone(440, 1.0);
    expect(trimToLimit(short, TARGET_RATE_HZ)).toBe(short);
  });
});
