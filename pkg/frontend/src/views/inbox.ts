/** Confirmation inbox: pending extrapolation proposals with their source
 * evidence; accept persists the fill, reject keeps the NULL. Buttons lock
 * as soon as a decision is in flight so double clicks cannot double-send. */

import { ProposalJson, UiSession } from "../api.js";
import { VNode, h } from "../dom.js";

export class InboxView {
  deciding = new Set<string>();
  decided = new Map<string, string>();
  error: string | null = null;

  constructor(private session: UiSession, private rerender: () => void) {}

  async refresh(): Promise<void> {
    await this.session.refreshPending();
    this.rerender();
  }

  async decide(proposal: ProposalJson, decision: "accept" | "reject"): Promise<void> {
    if (this.deciding.has(proposal.proposal_id) || this.decided.has(proposal.proposal_id)) {
      return;
    }
    this.deciding.add(proposal.proposal_id);
    this.rerender();
    try {
      const out = await this.session.api.confirm(proposal.proposal_id, decision);
      this.decided.set(proposal.proposal_id, out.status);
    } catch (err) {
      this.error = String((err as Error).message ?? err);
    } finally {
      this.deciding.delete(proposal.proposal_id);
      this.rerender();
    }
  }

  view(): VNode {
    const proposals = this.session.pendingProposals;
    return h(
      "section",
      { class: "inbox-view" },
      h("h2", {}, "Proposed data fills"),
      h("button", { class: "refresh", onclick: () => void this.refresh() }, "refresh"),
      this.error ? h("p", { class: "error" }, this.error) : null,
      proposals.length === 0
        ? h("p", { class: "empty" }, "nothing waiting for your review")
        : h(
            "ul",
            { class: "proposals" },
            proposals.map((p) => this.renderProposal(p)),
          ),
    );
  }

  private renderProposal(p: ProposalJson): VNode {
    const locked = this.deciding.has(p.proposal_id) || this.decided.has(p.proposal_id);
    const outcome = this.decided.get(p.proposal_id);
    return h(
      "li",
      { class: "proposal", "data-id": p.proposal_id },
      h(
        "p",
        { class: "proposal-text" },
        `${p.table} row ${p.row_handle}: fill ${p.column} with ${p.display_value}`,
      ),
      h(
        "p",
        { class: "evidence" },
        `evidence: ${p.source_table} measurement on ${p.source_date}` +
          (p.source_time ? ` at ${p.source_time}` : ""),
      ),
      outcome
        ? h("span", { class: `outcome outcome-${outcome}` }, outcome)
        : h(
            "span",
            {},
            h(
              "button",
              {
                class: "accept",
                disabled: locked,
                onclick: () => void this.decide(p, "accept"),
              },
              "accept",
            ),
            h(
              "button",
              {
                class: "reject",
                disabled: locked,
                onclick: () => void this.decide(p, "reject"),
              },
              "reject",
            ),
          ),
    );
  }
}
