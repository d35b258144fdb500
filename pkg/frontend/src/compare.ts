/** Result comparison: keyed CSV diff tables and a split image view with a
 * draggable divider. The baseline pane shows an operator-supplied reference. */

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface CsvDiffResult {
  diffCount: number;
}

interface AlignedRow {
  key: string;
  left: string[] | null;
  right: string[] | null;
}

function alignRows(left: string[][], right: string[][]): AlignedRow[] {
  const leftBody = left.slice(1);
  const rightBody = right.slice(1);
  const rightByKey = new Map(rightBody.map((row) => [row[0], row]));
  const seen = new Set<string>();
  const aligned: AlignedRow[] = [];
  for (const row of leftBody) {
    const key = row[0];
    seen.add(key);
    aligned.push({ key, left: row, right: rightByKey.get(key) ?? null });
  }
  for (const row of rightBody) {
    if (!seen.has(row[0])) aligned.push({ key: row[0], left: null, right: row });
  }
  return aligned;
}

function rowCells(row: string[] | null, other: string[] | null, width: number): string {
  const cells: string[] = [];
  for (let i = 0; i < width; i++) {
    const value = row?.[i] ?? "";
    const otherValue = other?.[i] ?? "";
    const diff = value !== otherValue;
    cells.push(`<td class="${diff ? "diff-cell" : ""}">${escapeHtml(value)}</td>`);
  }
  return cells.join("");
}

function csvTable(title: string, header: string[], aligned: AlignedRow[], side: "left" | "right"): string {
  const width = header.length;
  const body = aligned
    .map((row) => {
      const own = side === "left" ? row.left : row.right;
      const other = side === "left" ? row.right : row.left;
      const missing = own === null ? "row-missing" : "";
      return `<tr class="${missing}" data-key="${escapeHtml(row.key)}">${rowCells(own, other, width)}</tr>`;
    })
    .join("");
  return `
    <div class="csv-pane">
      <h4>${escapeHtml(title)}</h4>
      <table class="csv-table">
        <thead><tr>${header.map((h) => `<th>${escapeHtml(h)}</th>`).join("")}</tr></thead>
        <tbody>${body}</tbody>
      </table>
    </div>`;
}

/** Side-by-side CSV tables keyed on the first column; mismatching cells are
 * highlighted on both sides. Returns the number of differing cells per side. */
export function renderCsvDiff(
  container: HTMLElement,
  baseline: string[][],
  generated: string[][],
  baselineLabel = "baseline",
  generatedLabel = "generated",
): CsvDiffResult {
  const header = baseline[0] ?? generated[0] ?? [];
  const aligned = alignRows(baseline, generated);
  container.innerHTML = `
    <div class="csv-diff" data-testid="csv-diff">
      ${csvTable(baselineLabel, header, aligned, "left")}
      ${csvTable(generatedLabel, header, aligned, "right")}
    </div>`;
  const diffCount = container.querySelectorAll(".csv-pane:first-child .diff-cell").length;
  const summary = document.createElement("p");
  summary.className = "diff-summary";
  summary.dataset.testid = "diff-summary";
  summary.textContent =
    diffCount === 0 ? "Outputs match the baseline." : `${diffCount} differing cell(s).`;
  container.querySelector(".csv-diff")!.prepend(summary);
  return { diffCount };
}

export interface ImageCompareController {
  setSplit(percent: number): void;
  getSplit(): number;
}

/** Two image panes with a draggable divider; the right pane is clipped at the
 * divider so the images overlay in place. */
export function renderImageCompare(
  container: HTMLElement,
  baselineUrl: string,
  generatedUrl: string,
): ImageCompareController {
  container.innerHTML = `
    <div class="image-compare" data-testid="image-compare">
      <img class="compare-left" alt="baseline result" src="${baselineUrl}" />
      <div class="compare-clip"><img class="compare-right" alt="generated result" src="${generatedUrl}" /></div>
      <div class="compare-divider" data-testid="compare-divider"><span class="compare-handle"></span></div>
    </div>`;
  const wrapper = container.querySelector<HTMLDivElement>(".image-compare")!;
  const clip = container.querySelector<HTMLDivElement>(".compare-clip")!;
  const divider = container.querySelector<HTMLDivElement>(".compare-divider")!;
  let split = 50;

  function apply(): void {
    divider.style.left = `${split}%`;
    clip.style.width = `${100 - split}%`;
  }

  function setSplit(percent: number): void {
    split = Math.max(0, Math.min(100, percent));
    apply();
  }

  function onMove(event: PointerEvent | MouseEvent): void {
    const rect = wrapper.getBoundingClientRect();
    if (rect.width > 0) {
      setSplit(((event.clientX - rect.left) / rect.width) * 100);
    }
  }

  divider.addEventListener("pointerdown", (event) => {
    divider.classList.add("divider-active");
    if (divider.setPointerCapture && "pointerId" in event) {
      try {
        divider.setPointerCapture((event as PointerEvent).pointerId);
      } catch {
        // jsdom and older browsers: dragging still works via move events
      }
    }
    const up = () => {
      divider.classList.remove("divider-active");
      wrapper.removeEventListener("pointermove", onMove);
      wrapper.removeEventListener("pointerup", up);
    };
    wrapper.addEventListener("pointermove", onMove);
    wrapper.addEventListener("pointerup", up);
  });

  apply();
  return { setSplit, getSplit: () => split };
}
