// Wire types for the labeling service. Field names and the exclusion
// taxonomy mirror the server exactly; a mismatch here surfaces as a 422.

export const EXCLUSION_REASONS = [
  "no_drug",
  "meta_analysis_or_review",
  "retrospective_reanalysis",
  "observational",
  "protocol_no_results",
  "no_human_subjects",
  "animal",
  "other",
] as const;

export type ExclusionReason = (typeof EXCLUSION_REASONS)[number];

export type Verdict = "include" | "exclude";

export interface QueueItem {
  pmid: string;
  title: string;
  abstract: string;
  split: string;
  position: number;
  remaining: number;
}

export type QueueResponse =
  | { done: true; remaining: number }
  | ({ done: false } & QueueItem);

export interface LabelSubmission {
  pmid: string;
  verdict: Verdict;
  reason: ExclusionReason | null;
  labeler: string;
  revision: number;
  timestamp: string;
}

export interface SubmitAck {
  status: "recorded" | "duplicate";
  pmid: string;
  revision: number;
}

/** Shape of GET /progress, the server's per-split label summary. */
export interface ProgressStats {
  split: string;
  n: number;
  positive_share: number | null;
  reason_histogram: Record<string, number>;
}

/** The client-side progress report: server counts plus the derived total. */
export interface ProgressView {
  split: string;
  labeled: number;
  total: number;
  positive_share: number | null;
  reason_histogram: Record<string, number>;
}

/** The subset of the API client the session logic depends on. */
export interface LabelsClient {
  fetchNext(labeler: string, split: string): Promise<QueueResponse>;
  submit(sub: LabelSubmission): Promise<SubmitAck>;
  progress(split: string): Promise<ProgressStats>;
}
