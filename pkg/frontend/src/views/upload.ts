/** Upload view: stage documents (drag/drop or picker), declare formats,
 * submit one manifest, and render the per-document ingestion report. */

import { UploadDoc, UploadReportJson, VaultApi } from "../api.js";
import { VNode, h } from "../dom.js";

const FORMATS = ["tabular", "keyvalue_text", "timeseries", "opaque_binary"];

export interface StagedDoc {
  doc_id: string;
  declared_format: string;
  source_label: string;
  text?: string;
  content_b64?: string;
  sidecar_text?: string;
  object_class?: string;
}

export class UploadView {
  staged: StagedDoc[] = [];
  report: UploadReportJson | null = null;
  error: string | null = null;
  busy = false;

  constructor(private api: VaultApi, private rerender: () => void) {}

  stage(doc: StagedDoc): void {
    this.staged.push(doc);
    this.report = null;
    this.rerender();
  }

  stageTextFile(name: string, text: string): void {
    const guessed = name.endsWith(".csv") ? "tabular" : "keyvalue_text";
    this.stage({ doc_id: name, declared_format: guessed, source_label: "", text });
  }

  stageBinaryFile(name: string, contentB64: string): void {
    this.stage({
      doc_id: name,
      declared_format: "opaque_binary",
      source_label: "",
      content_b64: contentB64,
    });
  }

  remove(index: number): void {
    this.staged.splice(index, 1);
    this.rerender();
  }

  async submit(): Promise<void> {
    if (this.staged.length === 0 || this.busy) return;
    this.busy = true;
    this.error = null;
    this.rerender();
    try {
      this.report = await this.api.upload(this.staged as UploadDoc[]);
      this.staged = [];
    } catch (err) {
      this.error = String((err as Error).message ?? err);
    } finally {
      this.busy = false;
      this.rerender();
    }
  }

  view(): VNode {
    return h(
      "section",
      { class: "upload-view" },
      h("h2", {}, "Upload records"),
      h(
        "div",
        {
          class: "dropzone",
          ondragover: (e: DragEvent) => e.preventDefault(),
          ondrop: (e: DragEvent) => this.onDrop(e),
        },
        "drop files here or use the picker below",
      ),
      h("input", {
        type: "file",
        multiple: true,
        onchange: (e: Event) => this.onPick(e),
      }),
      this.staged.length > 0
        ? h(
            "ul",
            { class: "staged" },
            this.staged.map((doc, i) =>
              h(
                "li",
                { class: "staged-doc" },
                h("span", { class: "doc-name" }, doc.doc_id),
                h(
                  "select",
                  {
                    class: "format-pick",
                    onchange: (e: Event) => {
                      doc.declared_format = (e.target as HTMLSelectElement).value;
                    },
                  },
                  FORMATS.map((f) =>
                    h("option", { value: f, selected: f === doc.declared_format }, f),
                  ),
                ),
                h("input", {
                  class: "source-label",
                  placeholder: "source (provider / facility)",
                  value: doc.source_label,
                  oninput: (e: Event) => {
                    doc.source_label = (e.target as HTMLInputElement).value;
                  },
                }),
                h("button", { class: "remove", onclick: () => this.remove(i) }, "remove"),
              ),
            ),
          )
        : null,
      h(
        "button",
        {
          class: "submit-upload",
          disabled: this.staged.length === 0 || this.busy,
          onclick: () => void this.submit(),
        },
        this.busy ? "uploading..." : "upload",
      ),
      this.error ? h("p", { class: "error" }, this.error) : null,
      this.report ? this.renderReport(this.report) : null,
    );
  }

  private renderReport(report: UploadReportJson): VNode {
    return h(
      "div",
      { class: "upload-report" },
      h("h3", {}, `ingested ${report.ok} document(s), ${report.errors} error(s)`),
      h(
        "ul",
        {},
        report.docs.map((doc) =>
          doc.status === "ok"
            ? h(
                "li",
                { class: "doc-ok" },
                `${doc.doc_id}: ` +
                  Object.entries(doc.rows_added)
                    .map(([t, n]) => `${t} +${n}`)
                    .join(", ") +
                  Object.entries(doc.derived_updated)
                    .map(([t, months]) => `; ${t} updated for ${months.join(", ")}`)
                    .join(""),
              )
            : h("li", { class: "doc-error" }, `${doc.doc_id}: ${doc.error}`),
        ),
      ),
      h(
        "p",
        { class: "table-counts" },
        Object.entries(report.table_counts)
          .map(([t, n]) => `${t}=${n}`)
          .join("  "),
      ),
    );
  }

  private onDrop(e: DragEvent): void {
    e.preventDefault();
    const files = e.dataTransfer?.files;
    if (files) this.readFiles(files);
  }

  private onPick(e: Event): void {
    const files = (e.target as HTMLInputElement).files;
    if (files) this.readFiles(files);
  }

  private readFiles(files: FileList): void {
    for (const file of Array.from(files)) {
      const reader = new FileReader();
      if (/\.(bin|png|jpg|jpeg|dcm|pdf)$/i.test(file.name)) {
        reader.onload = () => {
          const b64 = String(reader.result).split(",", 2)[1] ?? "";
          this.stageBinaryFile(file.name, b64);
        };
        reader.readAsDataURL(file);
      } else {
        reader.onload = () => this.stageTextFile(file.name, String(reader.result));
        reader.readAsText(file);
      }
    }
  }
}
