import { renderGrid } from "./grid.js";
import { chooseKey, control, editFormula, toggleExport } from "./protocol.js";
import { applyRaw, GridState, initialState, selectKey } from "./state.js";
import { connect } from "./ws.js";

let state: GridState = initialState();

const grid = document.getElementById("grid")!;
const banner = document.getElementById("banner")!;
const keySelect = document.getElementById("keys") as HTMLSelectElement;
const addrInput = document.getElementById("addr") as HTMLInputElement;
const formulaInput = document.getElementById("formula") as HTMLInputElement;
const exportInput = document.getElementById("export-name") as HTMLInputElement;
const seqLabel = document.getElementById("seq")!;

const transport = connect(
  `ws://${location.host}/ws`,
  (raw) => {
    state = applyRaw(state, raw);
    redraw();
  },
  (connected) => {
    banner.textContent = connected ? "" : "disconnected — reconnecting…";
    banner.classList.toggle("visible", !connected);
    setEditingEnabled(connected);
  },
);

function setEditingEnabled(on: boolean): void {
  for (const el of document.querySelectorAll("button, input, select")) {
    (el as HTMLButtonElement).disabled = !on;
  }
}

function redraw(): void {
  renderGrid(grid, state, {
    onCellClick(addr) {
      addrInput.value = addr;
      const cell = state.cells.get(addr);
      // window cells are value lists; they are not editable as scalars
      formulaInput.value = cell?.formula ?? "";
      exportInput.value = cell?.exportName ?? "";
    },
  });
  seqLabel.textContent = `seq ${state.seq < 0 ? "–" : state.seq}`
    + (state.instance !== null ? ` · ${state.instance}` : "");
  const current = keySelect.value;
  keySelect.textContent = "";
  const all = document.createElement("option");
  all.value = "";
  all.textContent = "(template)";
  keySelect.appendChild(all);
  for (const k of state.keys) {
    const opt = document.createElement("option");
    opt.value = String(k);
    opt.textContent = String(k);
    keySelect.appendChild(opt);
  }
  keySelect.value = state.selectedKey === null ? "" : String(state.selectedKey);
  if (keySelect.value === "" && current !== "") {
    keySelect.value = "";
  }
  if (state.lastError) {
    banner.textContent = state.lastError;
    banner.classList.add("visible");
  }
}

document.getElementById("set-formula")!.addEventListener("click", () => {
  if (addrInput.value && formulaInput.value) {
    transport.send(editFormula(addrInput.value.toUpperCase(), formulaInput.value));
  }
});
document.getElementById("mark-export")!.addEventListener("click", () => {
  if (addrInput.value && exportInput.value) {
    transport.send(toggleExport(addrInput.value.toUpperCase(), exportInput.value, true));
  }
});
document.getElementById("unmark-export")!.addEventListener("click", () => {
  if (addrInput.value && exportInput.value) {
    transport.send(toggleExport(addrInput.value.toUpperCase(), exportInput.value, false));
  }
});
for (const action of ["pause", "resume", "step"] as const) {
  document.getElementById(action)!.addEventListener("click", () => {
    transport.send(control(action));
  });
}
keySelect.addEventListener("change", () => {
  const v = keySelect.value;
  if (v === "") {
    state = selectKey(state, null);
    redraw();
    return;
  }
  const key = state.keys.find((k) => String(k) === v);
  if (key !== undefined) {
    state = selectKey(state, key);
    transport.send(chooseKey(key));
  }
});

redraw();
