/**
 * Thin typed client for the annotation service.
 *
 * Every non-2xx response becomes an ApiError carrying the service's
 * `detail` text verbatim — the UI shows the server's words, not a
 * paraphrase.  A 409 on an edit whose body reports the current digest is
 * a DigestConflict: the caller's snapshot is stale and must be reloaded
 * before editing can continue.
 */

import type {
  EditAck,
  EditDraft,
  EditLogResponse,
  MetricsReport,
  SequenceInfo,
  TracksResponse,
} from "./types";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

/** The server refused an edit because our digest is stale. */
export class DigestConflict extends ApiError {
  constructor(
    detail: string,
    readonly serverDigest: string,
  ) {
    super(409, detail);
    this.name = "DigestConflict";
  }
}

async function errorFrom(res: Response): Promise<ApiError> {
  let detail = `${res.status} ${res.statusText}`;
  let digest: string | null = null;
  try {
    const body = await res.json();
    if (typeof body?.detail === "string") detail = body.detail;
    if (typeof body?.digest === "string") digest = body.digest;
  } catch {
    // non-JSON error body; keep the status line
  }
  if (res.status === 409 && digest !== null) {
    return new DigestConflict(detail, digest);
  }
  return new ApiError(res.status, detail);
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) throw await errorFrom(res);
  return (await res.json()) as T;
}

export class Api {
  constructor(readonly base: string = "") {}

  private url(path: string, params?: Record<string, string | number>): string {
    let query = "";
    if (params && Object.keys(params).length > 0) {
      const q = new URLSearchParams();
      for (const [k, v] of Object.entries(params)) q.set(k, String(v));
      query = `?${q.toString()}`;
    }
    return `${this.base}${path}${query}`;
  }

  async listSequences(): Promise<string[]> {
    const body = await asJson<{ sequences: string[] }>(
      await fetch(this.url("/sequences")),
    );
    return body.sequences;
  }

  async sequenceInfo(name: string): Promise<SequenceInfo> {
    return asJson(await fetch(this.url(`/sequences/${name}`)));
  }

  async tracks(name: string, from?: number, to?: number): Promise<TracksResponse> {
    const params: Record<string, number> = {};
    if (from !== undefined) params["from"] = from;
    if (to !== undefined) params["to"] = to;
    return asJson(await fetch(this.url(`/sequences/${name}/tracks`, params)));
  }

  /** URL of the rendered top-down PNG; trail=0 leaves trails to the client. */
  topdownUrl(name: string, frame: number, scale = 4, trail = 0): string {
    return this.url(`/sequences/${name}/frames/${frame}/topdown`, {
      scale,
      trail,
    });
  }

  async fetchTopdown(name: string, frame: number, scale = 4): Promise<Blob> {
    const res = await fetch(this.topdownUrl(name, frame, scale));
    if (!res.ok) throw await errorFrom(res);
    return res.blob();
  }

  async submitEdit(
    name: string,
    op: EditDraft,
    baseDigest: string,
  ): Promise<EditAck> {
    const res = await fetch(this.url(`/sequences/${name}/edits`), {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ base_digest: baseDigest, ...op }),
    });
    return asJson(res);
  }

  async metrics(name: string, gt?: string): Promise<MetricsReport> {
    const params: Record<string, string> = {};
    if (gt !== undefined) params["gt"] = gt;
    return asJson(await fetch(this.url(`/sequences/${name}/metrics`, params)));
  }

  async editLog(name: string): Promise<EditLogResponse> {
    return asJson(await fetch(this.url(`/sequences/${name}/editlog`)));
  }
}
