/**
 * Labeling session state machine.
 *
 * The session advances optimistically: a submission that fails on the
 * network is parked in a retry queue and the labeler keeps working. Each
 * submission carries an explicit revision number, so flushing the queue
 * after a reconnect is idempotent (the server answers "duplicate" when the
 * original request actually landed) and undo never deletes anything: it
 * re-presents the record and the next verdict supersedes the old one under
 * a higher revision.
 */

import { ApiError } from "./api.js";
import type {
  ExclusionReason,
  LabelsClient,
  LabelSubmission,
  ProgressView,
  QueueItem,
  Verdict,
} from "./types.js";

export type SessionPhase =
  | { phase: "idle" }
  | { phase: "loading" }
  | { phase: "item"; item: QueueItem }
  | { phase: "done"; remaining: number }
  | { phase: "disconnected" };

export interface SessionView {
  phase: SessionPhase["phase"];
  item: QueueItem | null;
  error: string | null;
  pendingRetries: number;
  canUndo: boolean;
}

export class LabelingSession {
  private state: SessionPhase = { phase: "idle" };
  private error: string | null = null;
  private readonly revisions = new Map<string, number>();
  private readonly retryQueue: LabelSubmission[] = [];
  private lastAction: { item: QueueItem; submission: LabelSubmission } | null = null;
  private lastRemaining = 0;
  private readonly listeners: Array<() => void> = [];

  constructor(
    private readonly api: LabelsClient,
    readonly labeler: string,
    readonly split: string,
  ) {}

  onChange(listener: () => void): () => void {
    this.listeners.push(listener);
    return () => {
      const at = this.listeners.indexOf(listener);
      if (at >= 0) this.listeners.splice(at, 1);
    };
  }

  private emit(): void {
    for (const listener of [...this.listeners]) listener();
  }

  view(): SessionView {
    return {
      phase: this.state.phase,
      item: this.state.phase === "item" ? this.state.item : null,
      error: this.error,
      pendingRetries: this.retryQueue.length,
      canUndo: this.lastAction !== null,
    };
  }

  async start(): Promise<void> {
    await this.advance();
  }

  /** Fetch the next leased record; network loss parks the session. */
  private async advance(): Promise<void> {
    this.state = { phase: "loading" };
    this.emit();
    try {
      const next = await this.api.fetchNext(this.labeler, this.split);
      this.lastRemaining = next.remaining;
      if (!next.done && this.retryQueue.some((sub) => sub.pmid === next.pmid)) {
        // the server re-served a record whose label is parked in the retry
        // queue; its lease pins the queue head, so flushing is the only way
        // forward
        this.state = { phase: "disconnected" };
      } else {
        this.state = next.done
          ? { phase: "done", remaining: next.remaining }
          : { phase: "item", item: next };
      }
    } catch (err) {
      if (err instanceof ApiError && !err.retryable) {
        this.error = err.message;
      }
      this.state = { phase: "disconnected" };
    }
    this.emit();
  }

  async labelInclude(): Promise<boolean> {
    return this.submitCurrent("include", null);
  }

  async labelExclude(reason: ExclusionReason): Promise<boolean> {
    return this.submitCurrent("exclude", reason);
  }

  private async submitCurrent(verdict: Verdict, reason: ExclusionReason | null): Promise<boolean> {
    if (verdict === "include" && reason !== null) {
      throw new Error("include labels cannot carry a reason");
    }
    if (verdict === "exclude" && reason === null) {
      throw new Error("exclude labels need a reason");
    }
    if (this.state.phase !== "item") return false;
    const item = this.state.item;
    const revision = (this.revisions.get(item.pmid) ?? -1) + 1;
    const submission: LabelSubmission = {
      pmid: item.pmid,
      verdict,
      reason,
      labeler: this.labeler,
      revision,
      timestamp: new Date().toISOString(),
    };
    this.revisions.set(item.pmid, revision);
    this.lastAction = { item, submission };
    this.error = null;

    try {
      await this.api.submit(submission);
    } catch (err) {
      if (err instanceof ApiError && !err.retryable) {
        // the server said no: put the item back and show why
        if (revision === 0) this.revisions.delete(item.pmid);
        else this.revisions.set(item.pmid, revision - 1);
        this.lastAction = null;
        this.error = err.message;
        this.state = { phase: "item", item };
        this.emit();
        return false;
      }
      this.retryQueue.push(submission);
    }
    await this.advance();
    return true;
  }

  /**
   * Re-send parked submissions in order. Stops at the first network
   * failure; server rejections are surfaced but do not block the rest.
   * Returns how many submissions left the queue.
   */
  async flushRetries(): Promise<number> {
    let flushed = 0;
    while (this.retryQueue.length > 0) {
      const head = this.retryQueue[0]!;
      try {
        await this.api.submit(head);
      } catch (err) {
        if (err instanceof ApiError && !err.retryable) {
          this.error = err.message;
        } else {
          break;
        }
      }
      this.retryQueue.shift();
      flushed += 1;
    }
    this.emit();
    if (this.retryQueue.length === 0 && this.state.phase === "disconnected") {
      await this.advance();
    }
    return flushed;
  }

  /**
   * Pull the most recent submission back for relabeling. The old label
   * stays in the audit trail; the next verdict wins with a new revision.
   */
  undoLast(): boolean {
    if (this.lastAction === null) return false;
    const { item } = this.lastAction;
    this.lastAction = null;
    this.error = null;
    this.state = { phase: "item", item };
    this.emit();
    return true;
  }

  /** Live counts from the server plus the total implied by the queue. */
  async progressView(): Promise<ProgressView> {
    const stats = await this.api.progress(this.split);
    return {
      split: stats.split,
      labeled: stats.n,
      total: stats.n + this.lastRemaining,
      positive_share: stats.positive_share,
      reason_histogram: { ...stats.reason_histogram },
    };
  }
}
