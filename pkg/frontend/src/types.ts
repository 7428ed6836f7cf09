/** Wire types for the answering service. Offsets count Unicode code points. */

export interface AnswerSpan {
  readonly text: string;
  readonly char_start: number;
  readonly char_end: number;
  readonly score: number;
}

export interface AnswerResponse {
  readonly answers: readonly AnswerSpan[];
  readonly model_id: string;
  readonly latency_ms: number;
  readonly context: string;
}

export interface ContextPreview {
  readonly id: string;
  readonly preview: string;
  readonly n_chars: number;
  readonly text: string;
}

export interface AnswerRequest {
  readonly question: string;
  readonly context?: string;
  readonly context_id?: string;
  readonly k?: number;
}
