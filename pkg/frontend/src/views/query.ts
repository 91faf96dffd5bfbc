/** Query view: template picker, interpretation preview for free text, and
 * the result table with provenance badges. */

import { ApiError, ResultSetJson, VaultApi } from "../api.js";
import { VNode, h } from "../dom.js";
import { QUERY_TEMPLATES, QueryTemplate, interpret } from "../templates.js";
import { renderResult } from "./result_table.js";

export class QueryView {
  template: QueryTemplate = QUERY_TEMPLATES[0]!;
  values: Record<string, string> = {};
  result: ResultSetJson | null = null;
  error: string | null = null;
  lastQuery: string | null = null;

  constructor(private api: VaultApi, private rerender: () => void) {}

  pickTemplate(id: string): void {
    const found = QUERY_TEMPLATES.find((t) => t.id === id);
    if (found) {
      this.template = found;
      this.values = {};
      this.rerender();
    }
  }

  setField(name: string, value: string): void {
    this.values[name] = value;
    this.rerender();
  }

  builtQuery(): string {
    return this.template.build(this.values).trim();
  }

  async run(): Promise<void> {
    const text = this.builtQuery();
    if (!text) return;
    this.error = null;
    this.lastQuery = text;
    try {
      this.result = await this.api.query(text);
    } catch (err) {
      this.result = null;
      this.error =
        err instanceof ApiError && err.status === 422
          ? `query not recognized.\n${err.message}`
          : String((err as Error).message ?? err);
    }
    this.rerender();
  }

  view(): VNode {
    const understood = this.template.id === "free" ? interpret(this.builtQuery()) : null;
    return h(
      "section",
      { class: "query-view" },
      h("h2", {}, "Query"),
      h(
        "select",
        {
          class: "template-pick",
          onchange: (e: Event) => this.pickTemplate((e.target as HTMLSelectElement).value),
        },
        QUERY_TEMPLATES.map((t) =>
          h("option", { value: t.id, selected: t.id === this.template.id }, t.label),
        ),
      ),
      h(
        "div",
        { class: "template-fields" },
        this.template.fields.map((f) =>
          h("input", {
            class: `field-${f.name}`,
            placeholder: f.placeholder,
            value: this.values[f.name] ?? "",
            oninput: (e: Event) => this.setField(f.name, (e.target as HTMLInputElement).value),
          }),
        ),
      ),
      understood
        ? h("p", { class: "interpretation" }, `I understood: ${understood}`)
        : null,
      h(
        "button",
        { class: "run-query", onclick: () => void this.run() },
        "run",
      ),
      this.lastQuery ? h("p", { class: "sent-query" }, this.lastQuery) : null,
      this.error ? h("pre", { class: "error guided-error" }, this.error) : null,
      this.result ? renderResult(this.result) : null,
    );
  }
}
