// Preview request scheduling for the threshold slider.
//
// Invariants:
// - at most one preview request is in flight at a time; while one is
//   pending, newer thresholds only overwrite the queued value
// - every request carries a sequence number; a response is applied only if
//   no newer response has been applied, so stale responses are discarded
//   even if the transport delivers them out of order

export class SequenceGate {
  private nextSeq = 0;
  private appliedSeq = -1;

  issue(): number {
    return this.nextSeq++;
  }

  // true iff this sequence number is newer than everything applied so far;
  // marks it applied on success
  tryApply(seq: number): boolean {
    if (seq <= this.appliedSeq) return false;
    this.appliedSeq = seq;
    return true;
  }
}

export interface PreviewController {
  request(threshold: number): void;
  inFlight(): boolean;
}

export function createPreviewController<R>(
  fetchPreview: (threshold: number) => Promise<R>,
  apply: (result: R, threshold: number) => void,
  onError: (err: unknown) => void = () => {},
): PreviewController {
  const gate = new SequenceGate();
  let busy = false;
  let queued: number | null = null;

  const launch = (threshold: number): void => {
    const seq = gate.issue();
    busy = true;
    fetchPreview(threshold)
      .then((result) => {
        if (gate.tryApply(seq)) apply(result, threshold);
      })
      .catch(onError)
      .finally(() => {
        busy = false;
        if (queued !== null) {
          const t = queued;
          queued = null;
          launch(t);
        }
      });
  };

  return {
    request(threshold: number): void {
      if (busy) {
        queued = threshold;
      } else {
        launch(threshold);
      }
    },
    inFlight: () => busy,
  };
}
