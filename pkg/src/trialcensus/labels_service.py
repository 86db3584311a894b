"""HTTP service for hand labeling.

Serves one record at a time per labeler. An item handed to a labeler is
leased to them until they label it, so two labelers working the same split
never see the same record. Restarting the service drops leases but never
labels: the store on disk is the source of truth.
"""

from __future__ import annotations

import threading

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .corpus import Corpus
from .labels import (
    SPLITS,
    LabelConflictError,
    LabelRecord,
    LabelStore,
    LabelValidationError,
    SplitAssignment,
    label_stats,
    utc_now_iso,
)


class LabelSubmission(BaseModel):
    pmid: str
    verdict: str
    reason: str | None = None
    labeler: str
    revision: int = 0
    timestamp: str | None = None
    note: str | None = None


def create_app(
    store: LabelStore,
    assignments: list[SplitAssignment],
    corpus: Corpus,
    token: str | None = None,
) -> FastAPI:
    app = FastAPI(title="label service")
    # the labeling page may be served from any static host, so browsers need
    # CORS headers; the shared token stays the actual access control
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    lock = threading.Lock()
    # pmid -> labeler holding the lease
    leases: dict[str, str] = {}
    by_split: dict[str, list[SplitAssignment]] = {s: [] for s in SPLITS}
    for a in sorted(assignments, key=lambda a: (a.split, a.position)):
        by_split[a.split].append(a)

    def check_token(x_auth_token: str | None = Header(default=None)) -> None:
        if token is not None and x_auth_token != token:
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.get("/queue", dependencies=[Depends(check_token)])
    def queue(labeler: str = Query(...), split: str = Query(...)):
        if split not in SPLITS:
            raise HTTPException(status_code=422, detail=f"unknown split {split!r}")
        if not labeler:
            raise HTTPException(status_code=422, detail="labeler must be non-empty")
        with lock:
            labeled = store.labeled_pmids()
            pending = [a for a in by_split[split] if a.pmid not in labeled]
            item = None
            fallback = None
            for a in pending:
                holder = leases.get(a.pmid)
                if holder == labeler:
                    item = a  # stable under refresh
                    break
                if holder is None and fallback is None:
                    fallback = a
            if item is None:
                item = fallback
            if item is None:
                return {"done": True, "remaining": len(pending)}
            leases[item.pmid] = labeler
            rec = corpus.get(item.pmid)
            return {
                "done": False,
                "pmid": rec.pmid,
                "title": rec.title,
                "abstract": rec.abstract,
                "split": split,
                "position": item.position,
                "remaining": len(pending),
            }

    @app.post("/labels", dependencies=[Depends(check_token)])
    def submit(sub: LabelSubmission):
        rec = LabelRecord(
            pmid=sub.pmid,
            verdict=sub.verdict,
            reason=sub.reason,
            labeler=sub.labeler,
            timestamp=sub.timestamp or utc_now_iso(),
            revision=sub.revision,
            note=sub.note,
        )
        with lock:
            try:
                appended = store.record_label(rec)
            except LabelConflictError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            except LabelValidationError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            if leases.get(rec.pmid) == rec.labeler:
                del leases[rec.pmid]
        return {"status": "recorded" if appended else "duplicate", "pmid": rec.pmid, "revision": rec.revision}

    @app.get("/progress", dependencies=[Depends(check_token)])
    def progress(split: str = Query(...)):
        if split not in SPLITS:
            raise HTTPException(status_code=422, detail=f"unknown split {split!r}")
        with lock:
            return label_stats(store, assignments, split)

    return app
