/**
 * Template-driven query building. The picker mirrors the engine's closed
 * grammar; free text is accepted but the client shows which template it
 * understood before sending, so the user sees the interpretation.
 */

export interface TemplateField {
  name: string;
  placeholder: string;
}

export interface QueryTemplate {
  id: string;
  label: string;
  fields: TemplateField[];
  build(values: Record<string, string>): string;
}

export const QUERY_TEMPLATES: QueryTemplate[] = [
  {
    id: "aggregate",
    label: "max / min / average of a column in a month",
    fields: [
      { name: "fn", placeholder: "max | min | avg" },
      { name: "column", placeholder: "Cholesterol" },
      { name: "month", placeholder: "November 2023" },
    ],
    build: (v) => `what was my ${v.fn ?? ""} ${v.column ?? ""} in ${v.month ?? ""}`,
  },
  {
    id: "doctor",
    label: "records from a doctor",
    fields: [{ name: "name", placeholder: "R. Chen" }],
    build: (v) => `records from doctor ${v.name ?? ""}`,
  },
  {
    id: "facility",
    label: "records from a facility",
    fields: [{ name: "name", placeholder: "Orthopedic Associates" }],
    build: (v) => `records from facility ${v.name ?? ""}`,
  },
  {
    id: "range",
    label: "records in a date range",
    fields: [
      { name: "from", placeholder: "2023-11-01" },
      { name: "to", placeholder: "2023-11-30" },
    ],
    build: (v) => `records from ${v.from ?? ""} to ${v.to ?? ""}`,
  },
  {
    id: "condition",
    label: "records about a condition",
    fields: [{ name: "condition", placeholder: "disc herniation" }],
    build: (v) => `records about ${v.condition ?? ""}`,
  },
  {
    id: "free",
    label: "free text (interpreted through the same templates)",
    fields: [{ name: "text", placeholder: "what was my maximum cholesterol in November 2023" }],
    build: (v) => v.text ?? "",
  },
];

const AGG_WORDS: Record<string, string> = {
  max: "max", maximum: "max", highest: "max",
  min: "min", minimum: "min", lowest: "min",
  avg: "avg", average: "avg", mean: "avg",
};

/** Client-side preview of how free text will be read; the engine's parser
 * is authoritative, this only renders the "I understood: ..." line. */
export function interpret(text: string): string | null {
  const t = text.trim().replace(/\s+/g, " ");
  let m = t.match(/^(?:what (?:was|is) )?(?:my )?(\w+) (.+?) in (.+?)\??$/i);
  if (m && m[1] && AGG_WORDS[m[1].toLowerCase()]) {
    return `${AGG_WORDS[m[1].toLowerCase()]}(${m[2]}), ${m[3]}`;
  }
  m = t.match(/^records from (doctor|facility) (.+)$/i);
  if (m) return `records where ${m[1]} = ${m[2]}`;
  m = t.match(/^records (?:from|between) (.+?) (?:to|and) (.+)$/i);
  if (m) return `records with dates in [${m[1]}, ${m[2]}]`;
  m = t.match(/^(?:retrieve )?records (?:about|on to|on|for) (.+)$/i);
  if (m) return `records linked to condition "${m[1]}"`;
  m = t.match(/^share(?: records)?(?: for| about| on)? (.+)$/i);
  if (m) return `share request for condition "${m[1]}" (use the share tab)`;
  if (/^select |^aggregate /i.test(t)) return `structured query: ${t}`;
  return null;
}
