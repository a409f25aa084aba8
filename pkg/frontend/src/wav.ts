// Client-side 16-bit PCM mono WAV encoding at the pipeline's native rate.
// The server resamples other rates, but encoding at 44.1 kHz avoids the
// round trip entirely.

export const TARGET_RATE_HZ = 44100;
export const MAX_TAKE_SECONDS = 3.0;

export function durationSeconds(samples: Float32Array, rateHz: number): number {
  return samples.length / rateHz;
}

export function needsTrim(samples: Float32Array, rateHz: number): boolean {
  // the server rejects clips at exactly the limit, so the limit itself trims
  return durationSeconds(samples, rateHz) >= MAX_TAKE_SECONDS;
}

export function trimToLimit(samples: Float32Array, rateHz: number): Float32Array {
  const maxSamples = Math.ceil(MAX_TAKE_SECONDS * rateHz) - 1;
  return samples.length > maxSamples ? samples.slice(0, maxSamples) : samples;
}

export function encodeWavPcm16(samples: Float32Array, rateHz: number): Uint8Array {
  if (samples.length === 0) {
    throw new Error("cannot encode an empty take");
  }
  if (!Number.isInteger(rateHz) || rateHz <= 0) {
    throw new Error(`bad sample rate ${rateHz}`);
  }
  const dataBytes = samples.length * 2;
  const buf = new ArrayBuffer(44 + dataBytes);
  const view = new DataView(buf);
  const ascii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) {
      view.setUint8(offset + i, text.charCodeAt(i));
    }
  };
  ascii(0, "RIFF");
  view.setUint32(4, 36 + dataBytes, true);
  ascii(8, "WAVE");
  ascii(12, "fmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, 1, true); // mono
  view.setUint32(24, rateHz, true);
  view.setUint32(28, rateHz * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  ascii(36, "data");
  view.setUint32(40, dataBytes, true);
  for (let i = 0; i < samples.length; i++) {
    const clamped = Math.max(-1, Math.min(1, samples[i]));
    view.setInt16(44 + 2 * i, Math.round(clamped * 32767), true);
  }
  return new Uint8Array(buf);
}
