// Confirmation inbox: decisions go through once, double clicks are inert,
// and accepted fills show up badged on the next query.

import { describe, expect, it } from "vitest";

import { ProposalJson, UiSession } from "../src/api.js";
import { byClass, click, textOf } from "../src/dom.js";
import { InboxView } from "../src/views/inbox.js";
import { QueryView } from "../src/views/query.js";
import { FakeBackend, emptyResult, flush } from "./helpers.js";

const PROPOSAL: ProposalJson = {
  proposal_id: "p-1",
  table: "Visit_Details",
  row_handle: 9,
  column: "Heart Rate",
  value: { t: "integer", v: "90" },
  display_value: "90",
  source_table: "Vital",
  source_date: "2023-11-24",
  source_time: "08:00",
  status: "pending",
};

function makeInbox(backend: FakeBackend) {
  const session = new UiSession(backend.api());
  session.pendingProposals = [PROPOSAL];
  return new InboxView(session, () => {});
}

describe("confirmation inbox", () => {
  it("shows the proposal with its source evidence", () => {
    const backend = new FakeBackend();
    const view = makeInbox(backend);
    const text = textOf(view.view());
    expect(text).toContain("fill Heart Rate with 90");
    expect(text).toContain("Vital measurement on 2023-11-24 at 08:00");
  });

  it("accept sends exactly one confirm call and locks the buttons", async () => {
    const backend = new FakeBackend();
    backend.respond("/confirm/p-1", { status: "accepted" });
    const view = makeInbox(backend);

    click(byClass(view.view(), "accept")[0]!);
    await flush();
    expect(backend.callsTo("/confirm/p-1")).toHaveLength(1);
    expect(textOf(view.view())).toContain("accepted");

    // after the decision the buttons are gone; nothing else can be sent
    expect(byClass(view.view(), "accept")).toHaveLength(0);
    await view.decide(PROPOSAL, "reject");
    expect(backend.callsTo("/confirm/p-1")).toHaveLength(1);
  });

  it("a double click cannot double-send", async () => {
    const backend = new FakeBackend();
    backend.respond("/confirm/p-1", { status: "accepted" });
    const view = makeInbox(backend);
    const tree = view.view();
    const accept = byClass(tree, "accept")[0]!;
    click(accept);
    click(accept); // second click on the same rendered button
    await flush();
    expect(backend.callsTo("/confirm/p-1")).toHaveLength(1);
  });

  it("reject leaves the cell NULL on the next query", async () => {
    const backend = new FakeBackend();
    backend.respond("/confirm/p-1", { status: "rejected" });
    const inbox = makeInbox(backend);
    click(byClass(inbox.view(), "reject")[0]!);
    await flush();

    backend.respond(
      "/query",
      emptyResult({
        sections: [
          {
            table: "Visit_Details",
            columns: ["Date", "Heart Rate"],
            rows: [
              [
                { attribute: "Date", value: { t: "date", v: "2023-11-24" }, display: "2023-11-24", provenance: "source" },
                { attribute: "Heart Rate", value: null, display: "", provenance: "source" },
              ],
            ],
          },
        ],
      }),
    );
    const query = new QueryView(backend.api(), () => {});
    query.pickTemplate("free");
    query.setField("text", "select Visit_Details where Date = 2023-11-24");
    await query.run();
    const cells = byClass(query.view(), "badge");
    expect(cells).toHaveLength(0);
  });

  it("accepted fills arrive badged on the next query", async () => {
    const backend = new FakeBackend();
    backend.respond("/confirm/p-1", { status: "accepted" });
    const inbox = makeInbox(backend);
    click(byClass(inbox.view(), "accept")[0]!);
    await flush();

    backend.respond(
      "/query",
      emptyResult({
        sections: [
          {
            table: "Visit_Details",
            columns: ["Heart Rate"],
            rows: [
              [
                { attribute: "Heart Rate", value: { t: "integer", v: "90" }, display: "90", provenance: "extrapolated" },
              ],
            ],
          },
        ],
      }),
    );
    const query = new QueryView(backend.api(), () => {});
    query.pickTemplate("free");
    query.setField("text", "select Visit_Details where Date = 2023-11-24");
    await query.run();
    expect(byClass(query.view(), "badge-extrapolated")).toHaveLength(1);
  });
});
