import type { ParamEntry } from "./api.js";
import { clamp, debounce, el } from "./util.js";

export interface ParamPanelOptions {
  /** Called with the full "<node>/<slot>" path and the clamped value. */
  onEdit: (path: string, value: number) => void;
  debounceMs?: number;
}

const SLIDER_STEPS = 200;

/**
 * Slider rows for every optimizable parameter, grouped by node. Edits
 * are clamped to the slot bounds and debounced so dragging a slider
 * produces one request, not hundreds.
 */
export function renderParams(
  container: HTMLElement,
  entries: ParamEntry[],
  options: ParamPanelOptions,
): void {
  container.textContent = "";
  const send = debounce(options.onEdit, options.debounceMs ?? 250);

  const groups = new Map<number, ParamEntry[]>();
  for (const e of entries) {
    const g = groups.get(e.node);
    if (g) g.push(e);
    else groups.set(e.node, [e]);
  }

  for (const [nodeId, group] of groups) {
    container.appendChild(el("div", "param-group", `node #${nodeId}`));
    for (const entry of group) {
      const row = el("div", "param-row");
      const name = el("label", "param-name", entry.path);
      name.title = `${entry.lo} .. ${entry.hi}`;
      const value = el("span", "param-value", entry.value.toFixed(3));

      const slider = el("input") as HTMLInputElement;
      slider.type = "range";
      slider.min = String(entry.lo);
      slider.max = String(entry.hi);
      slider.step = String((entry.hi - entry.lo) / SLIDER_STEPS);
      slider.value = String(entry.value);

      const box = el("input", "param-box") as HTMLInputElement;
      box.type = "number";
      box.value = entry.value.toFixed(3);

      const apply = (raw: number) => {
        const v = clamp(raw, entry.lo, entry.hi);
        slider.value = String(v);
        box.value = v.toFixed(3);
        value.textContent = v.toFixed(3);
        send(`${entry.node}/${entry.path}`, v);
      };
      slider.addEventListener("input", () => apply(Number(slider.value)));
      box.addEventListener("change", () => apply(Number(box.value)));

      row.append(name, slider, box, value);
      container.appendChild(row);
    }
  }
}
