import { FetchLike, ResultSetJson, VaultApi } from "../src/api.js";

export function emptyResult(overrides: Partial<ResultSetJson> = {}): ResultSetJson {
  return {
    status: "ok",
    kind: "select",
    value: null,
    value_provenance: null,
    sections: [],
    objects: [],
    manifest: [],
    released_categories: [],
    report_id: "r-1",
    ...overrides,
  };
}

export interface RecordedCall {
  path: string;
  method: string;
  body: unknown;
}

/** API test double: records every call and replays canned responses. */
export class FakeBackend {
  calls: RecordedCall[] = [];
  responses = new Map<string, unknown>();
  failures = new Map<string, { status: number; detail: string }>();

  respond(path: string, payload: unknown): void {
    this.responses.set(path, payload);
  }

  fail(path: string, status: number, detail: string): void {
    this.failures.set(path, { status, detail });
  }

  api(): VaultApi {
    const fetchImpl: FetchLike = async (url, init) => {
      const path = url.replace("http://test", "");
      this.calls.push({
        path,
        method: init.method ?? "GET",
        body: init.body ? JSON.parse(String(init.body)) : undefined,
      });
      const failure = this.failures.get(path);
      if (failure) {
        return new Response(JSON.stringify({ detail: failure.detail }), {
          status: failure.status,
        });
      }
      const payload = this.responses.get(path) ?? {};
      return new Response(JSON.stringify(payload), { status: 200 });
    };
    return new VaultApi("http://test", "test-token", fetchImpl);
  }

  callsTo(path: string): RecordedCall[] {
    return this.calls.filter((c) => c.path === path);
  }
}

export function flush(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
