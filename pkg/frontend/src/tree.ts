import type { NodeInfo, ProjectSnapshot } from "./api.js";
import { el } from "./util.js";

export interface TreeHandlers {
  onSelect: (id: number) => void;
  onMatte: (id: number) => void;
  onInstanceSplit: (id: number) => void;
  onAcceptSplit: (id: number) => void;
  onProceduralize: (id: number) => void;
  onFitMask: (id: number) => void;
}

/** Badge per lifecycle fact; running jobs add their stage elsewhere. */
function badges(node: NodeInfo): HTMLElement {
  const wrap = el("span", "badges");
  const add = (cls: string, text: string, title: string) => {
    const b = el("span", `badge ${cls}`, text);
    b.title = title;
    wrap.appendChild(b);
  };
  if (node.has_scribbles) add("scrib", "s", "has scribbles");
  if (node.pending_split) add("pending", "split?", "split proposed, not accepted");
  if (node.has_payload) add("proc", "fit", "procedural model attached");
  return wrap;
}

export function renderTree(
  container: HTMLElement,
  snapshot: ProjectSnapshot,
  selected: number,
  handlers: TreeHandlers,
): void {
  container.textContent = "";
  const byId = new Map(snapshot.nodes.map((n) => [n.id, n]));

  const renderNode = (id: number, depth: number) => {
    const node = byId.get(id);
    if (!node) return;
    const row = el("div", "tree-row" + (id === selected ? " selected" : ""));
    row.style.paddingLeft = `${8 + depth * 16}px`;
    const label = el("span", "tree-label",
                     `#${node.id} ${node.kind} (${node.mask_area}px)`);
    label.addEventListener("click", () => handlers.onSelect(id));
    row.appendChild(label);
    row.appendChild(badges(node));

    const actions = el("span", "tree-actions");
    const btn = (text: string, title: string, fn: () => void) => {
      const b = el("button", "mini", text);
      b.title = title;
      b.addEventListener("click", fn);
      actions.appendChild(b);
    };
    if (node.pending_split) {
      btn("accept", "commit the proposed split", () => handlers.onAcceptSplit(id));
    }
    if (node.children.length === 0 && !node.pending_split) {
      btn("matte", "split by scribble matting", () => handlers.onMatte(id));
      btn("inst", "split into repeated elements", () => handlers.onInstanceSplit(id));
      if (!node.has_payload) {
        btn("fit", "fit procedural noise models", () => handlers.onProceduralize(id));
      }
      btn("mask", "fit a procedural structure mask", () => handlers.onFitMask(id));
    }
    row.appendChild(actions);
    container.appendChild(row);
    for (const kid of node.children) renderNode(kid, depth + 1);
  };

  renderNode(snapshot.root, 0);
}
