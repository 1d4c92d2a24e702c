// DOM rendering: the grid is a pure function of GridState.

import { valueText } from "./protocol.js";
import { boundingBox, GridState, indexToCol } from "./state.js";

export interface GridCallbacks {
  onCellClick(addr: string): void;
}

const MAX_RENDER_CELLS = 20_000; // clamp the box for pathological models

export function renderGrid(root: HTMLElement, state: GridState, cb: GridCallbacks): void {
  root.textContent = "";
  const box = boundingBox(state);
  if (!box) {
    const empty = document.createElement("p");
    empty.className = "empty";
    empty.textContent = "no cells yet";
    root.appendChild(empty);
    return;
  }
  let { minCol, maxCol, minRow, maxRow } = box;
  while ((maxCol - minCol + 1) * (maxRow - minRow + 1) > MAX_RENDER_CELLS) {
    maxRow -= 1; // drop margin rows first; models never get near the clamp
  }

  const table = document.createElement("table");
  table.className = "grid";
  const head = table.insertRow();
  head.insertCell().className = "rowhead";
  for (let c = minCol; c <= maxCol; c++) {
    const th = head.insertCell();
    th.className = "colhead";
    th.textContent = indexToCol(c);
  }
  for (let r = minRow; r <= maxRow; r++) {
    const tr = table.insertRow();
    const rh = tr.insertCell();
    rh.className = "rowhead";
    rh.textContent = String(r);
    for (let c = minCol; c <= maxCol; c++) {
      const addr = `${indexToCol(c)}${r}`;
      const td = tr.insertCell();
      td.dataset.addr = addr;
      const cell = state.cells.get(addr);
      if (cell) {
        td.textContent = valueText(cell.value);
        if (cell.value.t === "win") {
          td.classList.add("window-cell"); // a badge, not an editable scalar
        } else if (cell.formula === null) {
          td.classList.add("bound"); // stream-fed, read-only tint
        } else {
          td.classList.add("formula");
          td.title = cell.formula;
        }
        if (cell.exportName) {
          td.classList.add("exported");
          td.title = (td.title ? td.title + " " : "") + `→ ${cell.exportName}`;
        }
      }
      td.addEventListener("click", () => cb.onCellClick(addr));
    }
  }
  root.appendChild(table);
}
