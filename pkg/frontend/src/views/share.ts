/** Share review: preview the release manifest grouped by category, then
 * require an explicit confirm click before the release call happens. The
 * release endpoint is never invoked without that confirmation. */

import { ManifestEntryJson, ResultSetJson, VaultApi } from "../api.js";
import { VNode, h } from "../dom.js";

export class ShareView {
  condition = "";
  preview: ResultSetJson | null = null;
  released: ResultSetJson | null = null;
  error: string | null = null;

  constructor(private api: VaultApi, private rerender: () => void) {}

  setCondition(value: string): void {
    this.condition = value;
    this.preview = null;
    this.released = null;
  }

  async runPreview(): Promise<void> {
    if (!this.condition.trim()) return;
    this.error = null;
    this.released = null;
    try {
      this.preview = await this.api.share(this.condition.trim(), "preview");
    } catch (err) {
      this.preview = null;
      this.error = String((err as Error).message ?? err);
    }
    this.rerender();
  }

  /** The one and only path to the release endpoint. */
  async confirmRelease(): Promise<void> {
    if (!this.canRelease()) return;
    try {
      this.released = await this.api.share(this.condition.trim(), "release");
    } catch (err) {
      this.error = String((err as Error).message ?? err);
    }
    this.rerender();
  }

  canRelease(): boolean {
    return (
      this.preview !== null &&
      this.preview.status === "ok" &&
      this.preview.manifest.length > 0 &&
      this.released === null
    );
  }

  view(): VNode {
    return h(
      "section",
      { class: "share-view" },
      h("h2", {}, "Share records"),
      h("input", {
        class: "condition-input",
        placeholder: "condition, e.g. disc herniation",
        value: this.condition,
        oninput: (e: Event) => this.setCondition((e.target as HTMLInputElement).value),
      }),
      h(
        "button",
        { class: "preview-share", onclick: () => void this.runPreview() },
        "preview release",
      ),
      this.error ? h("p", { class: "error" }, this.error) : null,
      this.preview ? this.renderPreview(this.preview) : null,
      h(
        "button",
        {
          class: "confirm-release",
          disabled: !this.canRelease(),
          onclick: () => void this.confirmRelease(),
        },
        "confirm and release",
      ),
      this.released
        ? h(
            "p",
            { class: "release-done" },
            `released ${this.released.manifest.length} item(s); report ${this.released.report_id}`,
          )
        : null,
    );
  }

  private renderPreview(preview: ResultSetJson): VNode {
    if (preview.status === "needs_user_input") {
      return h(
        "div",
        { class: "needs-user-input" },
        h(
          "p",
          {},
          `no sharing policy covers "${this.condition}" yet; define its categories in the vault's sharing policy file before releasing anything.`,
        ),
      );
    }
    if (preview.manifest.length === 0) {
      return h("p", { class: "empty-manifest" }, "nothing matches this condition; nothing to release");
    }
    const byCategory = new Map<string, ManifestEntryJson[]>();
    for (const entry of preview.manifest) {
      const bucket = byCategory.get(entry.category) ?? [];
      bucket.push(entry);
      byCategory.set(entry.category, bucket);
    }
    return h(
      "div",
      { class: "manifest" },
      h("h3", {}, `proposed release for "${this.condition}"`),
      Array.from(byCategory.entries()).map(([category, entries]) =>
        h(
          "div",
          { class: "manifest-category", "data-category": category },
          h("h4", {}, `${category} (${entries.length})`),
          h(
            "ul",
            {},
            entries.map((e) => h("li", { class: `manifest-${e.kind}` }, e.summary || e.identifier)),
          ),
        ),
      ),
    );
  }
}
