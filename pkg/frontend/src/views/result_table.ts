/** Result tables shared by the query and share views. Every cell the API
 * marks as system-populated gets a visible badge next to the value. */

import { ResultSetJson, SectionJson } from "../api.js";
import { Child, VNode, h } from "../dom.js";

export const BADGE_LABEL: Record<string, string> = {
  extrapolated: "extrapolated",
  computed_aggregate: "computed",
};

export function renderSection(section: SectionJson): VNode {
  return h(
    "table",
    { class: "results", "data-table": section.table },
    h("caption", {}, section.table),
    h(
      "thead",
      {},
      h("tr", {}, section.columns.map((c) => h("th", {}, c))),
    ),
    h(
      "tbody",
      {},
      section.rows.map((row) =>
        h(
          "tr",
          {},
          row.map((cell) => {
            const children: Child[] = [cell.display];
            if (cell.provenance !== "source") {
              children.push(
                h(
                  "span",
                  {
                    class: `badge badge-${cell.provenance}`,
                    title: `system-populated: ${cell.provenance}`,
                  },
                  BADGE_LABEL[cell.provenance] ?? cell.provenance,
                ),
              );
            }
            return h(
              "td",
              { "data-column": cell.attribute, "data-provenance": cell.provenance },
              ...children,
            );
          }),
        ),
      ),
    ),
  );
}

export function renderResult(rs: ResultSetJson): VNode {
  const parts: Child[] = [];
  if (rs.value !== null) {
    parts.push(
      h(
        "p",
        { class: "aggregate-value" },
        rs.value.v,
        rs.value_provenance && rs.value_provenance !== "source"
          ? h("span", { class: `badge badge-${rs.value_provenance}` }, BADGE_LABEL[rs.value_provenance] ?? rs.value_provenance)
          : null,
      ),
    );
  }
  for (const section of rs.sections) {
    parts.push(renderSection(section));
  }
  if (rs.objects.length > 0) {
    parts.push(
      h(
        "ul",
        { class: "objects" },
        rs.objects.map((o) =>
          h(
            "li",
            {},
            `${o.object_class} object ${o.handle}` +
              (o.captured ? ` captured ${o.captured}` : ""),
          ),
        ),
      ),
    );
  }
  if (rs.value === null && rs.sections.length === 0 && rs.objects.length === 0) {
    parts.push(h("p", { class: "empty" }, "no matching records"));
  }
  return h("div", { class: "result" }, ...parts);
}
