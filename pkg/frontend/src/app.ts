/** Tab shell wiring the four views over one session. */

import { UiSession, VaultApi } from "./api.js";
import { VNode, h } from "./dom.js";
import { InboxView } from "./views/inbox.js";
import { QueryView } from "./views/query.js";
import { ShareView } from "./views/share.js";
import { UploadView } from "./views/upload.js";

export type TabId = "upload" | "query" | "share" | "inbox";

export class App {
  session: UiSession;
  tab: TabId = "upload";
  upload: UploadView;
  query: QueryView;
  share: ShareView;
  inbox: InboxView;

  constructor(api: VaultApi, private rerender: () => void) {
    this.session = new UiSession(api);
    this.upload = new UploadView(api, rerender);
    this.query = new QueryView(api, rerender);
    this.share = new ShareView(api, rerender);
    this.inbox = new InboxView(this.session, rerender);
  }

  pick(tab: TabId): void {
    this.tab = tab;
    if (tab === "inbox") {
      void this.inbox.refresh();
    }
    this.rerender();
  }

  view(): VNode {
    const tabs: [TabId, string][] = [
      ["upload", "Upload"],
      ["query", "Query"],
      ["share", "Share"],
      ["inbox", `Review (${this.session.pendingProposals.length})`],
    ];
    const body =
      this.tab === "upload"
        ? this.upload.view()
        : this.tab === "query"
          ? this.query.view()
          : this.tab === "share"
            ? this.share.view()
            : this.inbox.view();
    return h(
      "div",
      { class: "app" },
      h("h1", {}, "medvault"),
      h(
        "nav",
        {},
        tabs.map(([id, label]) =>
          h(
            "button",
            {
              class: `tab tab-${id}` + (id === this.tab ? " active" : ""),
              onclick: () => this.pick(id),
            },
            label,
          ),
        ),
      ),
      body,
    );
  }
}
