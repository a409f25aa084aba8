// Microphone capture. Browser-only; the scripted tests inject synthesized
// takes directly into the controller instead.

export interface Take {
  samples: Float32Array;
  sampleRateHz: number;
}

export interface Recorder {
  start(): Promise<void>;
  stop(): Promise<Take>;
}

export class MicRecorder implements Recorder {
  private context: AudioContext | null = null;
  private stream: MediaStream | null = null;
  private processor: ScriptProcessorNode | null = null;
  private chunks: Float32Array[] = [];

  async start(): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({ audio: true });
    this.context = new AudioContext();
    const source = this.context.createMediaStreamSource(this.stream);
    this.processor = this.context.createScriptProcessor(4096, 1, 1);
    this.chunks = [];
    this.processor.onaudioprocess = (event) => {
      this.chunks.push(new Float32Array(event.inputBuffer.getChannelData(0)));
    };
    source.connect(this.processor);
    this.processor.connect(this.context.destination);
  }

  async stop(): Promise<Take> {
    if (!this.context || !this.stream || !this.processor) {
      throw new Error("recorder was not started");
    }
    this.processor.disconnect();
    for (const track of this.stream.getTracks()) {
      track.stop();
    }
    const rate = this.context.sampleRate;
    await this.context.close();
    const total = this.chunks.reduce((n, c) => n + c.length, 0);
    const samples = new Float32Array(total);
    let offset = 0;
    for (const chunk of this.chunks) {
      samples.set(chunk, offset);
      offset += chunk.length;
    }
    this.context = null;
    this.stream = null;
    this.processor = null;
    return { samples, sampleRateHz: Math.round(rate) };
  }
}
