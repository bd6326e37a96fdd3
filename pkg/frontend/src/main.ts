// DOM wiring: renders App state and forwards user input. Slider moves are
// debounced before they reach the preview scheduler.

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { debounce } from "./debounce.js";

const SLIDER_STEPS = 500;
const DEBOUNCE_MS = 120; // spec'd ceiling is 150

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function render(app: App): void {
  const list = el<HTMLUListElement>("frame-list");
  list.innerHTML = "";
  for (const f of app.visibleFrames()) {
    const item = document.createElement("li");
    item.className = app.current?.frameId === f.frame_id ? "selected" : "";
    const badge = f.annotated ? " ✓" : "";
    item.textContent = `${f.frame_id} [${f.split}]${badge}`;
    item.onclick = () => void app.selectFrame(f.frame_id);
    list.appendChild(item);
  }

  const cur = app.current;
  el("count-badge").textContent = cur?.count === null || !cur ? "–" : String(cur.count);
  el("threshold-value").textContent = cur ? cur.threshold.toFixed(2) : "–";
  el<HTMLButtonElement>("commit").disabled = !cur || cur.split === "test";
  el<HTMLButtonElement>("predict").disabled = !cur || cur.split !== "test";

  const img = el<HTMLImageElement>("preview");
  if (cur?.previewUrl) img.src = cur.previewUrl;

  const slider = el<HTMLInputElement>("threshold");
  if (cur) {
    slider.max = String(SLIDER_STEPS);
    slider.disabled = false;
  } else {
    slider.disabled = true;
  }

  const pred = el("prediction-panel");
  if (cur?.prediction) {
    pred.textContent =
      `model threshold ${cur.prediction.threshold.toFixed(2)} → ` +
      `${cur.prediction.count} tracks (yours: ${cur.threshold.toFixed(2)})`;
  } else {
    pred.textContent = "";
  }

  el("status").textContent = app.error ? `error: ${app.error}` : app.status;
  el("status").className = app.error ? "error" : "";
}

function wire(): void {
  const app: App = new App(
    new ApiClient(),
    (blob) => URL.createObjectURL(blob),
    () => render(app),
  );

  const slider = el<HTMLInputElement>("threshold");
  const applySlider = debounce(() => {
    if (!app.current) return;
    const frac = Number(slider.value) / SLIDER_STEPS;
    app.setThreshold(frac * app.current.maxResponse);
  }, DEBOUNCE_MS);
  slider.oninput = applySlider;

  el<HTMLSelectElement>("filter-split").onchange = (e) => {
    app.filters.split = (e.target as HTMLSelectElement).value;
    render(app);
  };
  el<HTMLSelectElement>("filter-category").onchange = (e) => {
    app.filters.category = (e.target as HTMLSelectElement).value;
    render(app);
  };
  el<HTMLButtonElement>("commit").onclick = () => void app.commit();
  el<HTMLButtonElement>("predict").onclick = () => void app.fetchPrediction();
  el<HTMLButtonElement>("train").onclick = () => {
    const category = app.frames[0]?.category ?? "";
    void app.train(category);
  };

  void app.refreshFrames().then(() => {
    const categories = [...new Set(app.frames.map((f) => f.category))];
    const select = el<HTMLSelectElement>("filter-category");
    for (const c of categories) {
      const opt = document.createElement("option");
      opt.value = c;
      opt.textContent = c;
      select.appendChild(opt);
    }
    render(app);
  });
}

wire();
