/**
 * Typed client for the vault HTTP API. The session holds the endpoint and
 * bearer token plus the cached schema summary; it never talks to the
 * storage service and never sees key material.
 */

export type ScalarJson = { t: string; v: string } | null;

export interface CellJson {
  attribute: string;
  value: ScalarJson;
  display: string;
  provenance: "source" | "computed_aggregate" | "extrapolated";
}

export interface SectionJson {
  table: string;
  columns: string[];
  rows: CellJson[][];
}

export interface ReleasedObjectJson {
  handle: string;
  object_class: string;
  captured: string | null;
  condition: string | null;
}

export interface ManifestEntryJson {
  kind: "row" | "object";
  category: string;
  identifier: string;
  summary: string;
}

export interface ResultSetJson {
  status: "ok" | "needs_user_input";
  kind: string;
  value: ScalarJson;
  value_provenance: string | null;
  sections: SectionJson[];
  objects: ReleasedObjectJson[];
  manifest: ManifestEntryJson[];
  released_categories: string[];
  report_id: string | null;
}

export interface UploadDoc {
  doc_id: string;
  declared_format: string;
  source_label: string;
  text?: string;
  content_b64?: string;
  sidecar_text?: string;
  object_class?: string;
}

export interface DocReportJson {
  doc_id: string;
  status: "ok" | "error";
  error: string | null;
  rows_added: Record<string, number>;
  derived_updated: Record<string, string[]>;
  object_handles: string[];
}

export interface UploadReportJson {
  docs: DocReportJson[];
  table_counts: Record<string, number>;
  ok: number;
  errors: number;
  report_id: string | null;
}

export interface ProposalJson {
  proposal_id: string;
  table: string;
  row_handle: number;
  column: string;
  value: ScalarJson;
  display_value: string;
  source_table: string;
  source_date: string;
  source_time: string | null;
  status: string;
}

export interface SchemaJson {
  tables: {
    name: string;
    columns: { name: string; value_type: string; encryption: string }[];
    is_derived: boolean;
  }[];
  templates: string[];
  conditions: string[];
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export type FetchLike = (url: string, init: RequestInit) => Promise<Response>;

export class VaultApi {
  constructor(
    private endpoint: string,
    private token: string,
    private fetchImpl: FetchLike = (u, i) => fetch(u, i),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(this.endpoint + path, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        "Content-Type": "application/json",
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await response.json().catch(() => ({}));
    if (!response.ok) {
      throw new ApiError(response.status, String((data as { detail?: string }).detail ?? response.status));
    }
    return data as T;
  }

  upload(documents: UploadDoc[]): Promise<UploadReportJson> {
    return this.call("POST", "/upload", { documents });
  }

  query(text: string): Promise<ResultSetJson> {
    return this.call("POST", "/query", { text });
  }

  share(condition: string, mode: "preview" | "release"): Promise<ResultSetJson> {
    return this.call("POST", "/share", { condition, mode });
  }

  async pending(): Promise<ProposalJson[]> {
    const data = await this.call<{ proposals: ProposalJson[] }>("GET", "/pending");
    return data.proposals;
  }

  confirm(proposalId: string, decision: "accept" | "reject"): Promise<{ status: string }> {
    return this.call("POST", `/confirm/${proposalId}`, { decision });
  }

  report(reportId: string): Promise<Record<string, unknown>> {
    return this.call("GET", `/report/${reportId}`);
  }

  schema(): Promise<SchemaJson> {
    return this.call("GET", "/schema");
  }
}

export class UiSession {
  cachedSchema: SchemaJson | null = null;
  pendingProposals: ProposalJson[] = [];

  constructor(public api: VaultApi) {}

  async refreshSchema(): Promise<SchemaJson> {
    this.cachedSchema = await this.api.schema();
    return this.cachedSchema;
  }

  async refreshPending(): Promise<ProposalJson[]> {
    this.pendingProposals = await this.api.pending();
    return this.pendingProposals;
  }
}
