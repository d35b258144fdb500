import { beforeEach, describe, expect, it } from "vitest";

import { renderCsvDiff, renderImageCompare } from "../src/compare.js";
import type { OutputsResponse } from "../src/types.js";
import repairedOutputs from "./fixtures/repaired/outputs.json";

function mount(): HTMLElement {
  const container = document.createElement("div");
  document.body.appendChild(container);
  return container;
}

describe("csv diff", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("shows zero highlighted cells for identical tables", () => {
    const outputs = repairedOutputs as OutputsResponse;
    const generated = outputs.outputs[0].rows!;
    const baseline = outputs.baseline!.rows!;
    const el = mount();
    const result = renderCsvDiff(el, baseline, generated);
    expect(result.diffCount).toBe(0);
    expect(el.querySelectorAll(".diff-cell").length).toBe(0);
    expect(el.querySelector("[data-testid=diff-summary]")!.textContent).toMatch(/match/i);
  });

  it("highlights the mismatching row cell on both sides", () => {
    const baseline = [
      ["zone", "dominant_class"],
      ["Roxbury", "23"],
      ["Dorchester", "23"],
    ];
    const generated = [
      ["zone", "dominant_class"],
      ["Roxbury", "23"],
      ["Dorchester", "11"],
    ];
    const el = mount();
    const result = renderCsvDiff(el, baseline, generated);
    expect(result.diffCount).toBe(1);
    const marked = Array.from(el.querySelectorAll("tr")).filter(
      (tr) => tr.querySelector(".diff-cell") !== null,
    );
    expect(marked.length).toBe(2); // left pane and right pane
    expect(marked.every((tr) => tr.getAttribute("data-key") === "Dorchester")).toBe(true);
  });

  it("marks rows missing from one side", () => {
    const baseline = [
      ["zone", "dominant_class"],
      ["Roxbury", "23"],
    ];
    const generated = [
      ["zone", "dominant_class"],
      ["Roxbury", "23"],
      ["Mattapan", "22"],
    ];
    const el = mount();
    const result = renderCsvDiff(el, baseline, generated);
    expect(result.diffCount).toBeGreaterThan(0);
    expect(el.querySelectorAll(".row-missing").length).toBe(1);
  });
});

describe("image compare", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("renders both panes with a draggable divider at 50%", () => {
    const el = mount();
    const controller = renderImageCompare(el, "/baseline.tif", "/generated.tif");
    expect(el.querySelectorAll("img").length).toBe(2);
    expect(controller.getSplit()).toBe(50);
    const divider = el.querySelector<HTMLElement>("[data-testid=compare-divider]")!;
    expect(divider.style.left).toBe("50%");
  });

  it("clamps and applies split changes", () => {
    const el = mount();
    const controller = renderImageCompare(el, "/a.tif", "/b.tif");
    controller.setSplit(30);
    expect(el.querySelector<HTMLElement>(".compare-clip")!.style.width).toBe("70%");
    controller.setSplit(240);
    expect(controller.getSplit()).toBe(100);
  });

  it("activates the divider on pointerdown", () => {
    const el = mount();
    renderImageCompare(el, "/a.tif", "/b.tif");
    const divider = el.querySelector<HTMLElement>("[data-testid=compare-divider]")!;
    divider.dispatchEvent(new Event("pointerdown", { bubbles: true }));
    expect(divider.classList.contains("divider-active")).toBe(true);
    el.querySelector(".image-compare")!.dispatchEvent(new Event("pointerup", { bubbles: true }));
    expect(divider.classList.contains("divider-active")).toBe(false);
  });
});
