/**
 * Minimal virtual nodes. Views build plain data trees; the browser entry
 * renders them with `mount`, and tests walk the tree and invoke handlers
 * directly, so no DOM implementation is needed to test interactions.
 */

export type Handler = (event?: unknown) => void;

export interface VNode {
  tag: string;
  props: Record<string, unknown>;
  children: Child[];
}

export type Child = VNode | string;

export function h(
  tag: string,
  props: Record<string, unknown> = {},
  ...children: (Child | Child[] | null | undefined | false)[]
): VNode {
  const flat: Child[] = [];
  const push = (c: Child | Child[] | null | undefined | false) => {
    if (c === null || c === undefined || c === false) return;
    if (Array.isArray(c)) {
      c.forEach(push);
    } else {
      flat.push(c);
    }
  };
  children.forEach(push);
  return { tag, props, children: flat };
}

export function mount(root: Element, node: Child): void {
  root.textContent = "";
  root.appendChild(toDom(node, root.ownerDocument));
}

function toDom(node: Child, doc: Document): Node {
  if (typeof node === "string") {
    return doc.createTextNode(node);
  }
  const el = doc.createElement(node.tag);
  for (const [key, value] of Object.entries(node.props)) {
    if (value === undefined || value === null || value === false) continue;
    if (key.startsWith("on") && typeof value === "function") {
      el.addEventListener(key.slice(2), value as EventListener);
    } else if (value === true) {
      el.setAttribute(key, "");
    } else {
      el.setAttribute(key, String(value));
    }
  }
  for (const child of node.children) {
    el.appendChild(toDom(child, doc));
  }
  return el;
}

// --- tree helpers used by tests and views ------------------------------------

export function findAll(node: Child, pred: (v: VNode) => boolean): VNode[] {
  const out: VNode[] = [];
  const walk = (n: Child) => {
    if (typeof n === "string") return;
    if (pred(n)) out.push(n);
    n.children.forEach(walk);
  };
  walk(node);
  return out;
}

export function byClass(node: Child, cls: string): VNode[] {
  return findAll(node, (v) => String(v.props.class ?? "").split(/\s+/).includes(cls));
}

export function textOf(node: Child): string {
  if (typeof node === "string") return node;
  return node.children.map(textOf).join("");
}

export function click(button: VNode): void {
  const handler = button.props.onclick as Handler | undefined;
  if (button.props.disabled) return; // mirrors browser behavior
  if (handler) handler({});
}
