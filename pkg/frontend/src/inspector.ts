/** Pipeline-step inspector: plan sections with per-attempt layer verdicts,
 * repair contexts with matched hints, and an edit-and-repair action on the
 * failing section. Renders server data only; no verdicts are recomputed. */

import type { AttemptView, SectionsResponse, SectionView } from "./types.js";

export interface InspectorOptions {
  onRepair?: (section: string, editedFragment: string) => void;
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function verdictChips(attempt: AttemptView): string {
  const chips = attempt.verdicts
    .map(
      (v) =>
        `<span class="chip ${v.passed ? "chip-pass" : "chip-fail"}">${v.layer}: ${
          v.passed ? "pass" : "fail"
        }</span>`,
    )
    .join(" ");
  const skipped = attempt.review_skipped
    ? ' <span class="chip chip-skip">SemanticReview: skipped</span>'
    : "";
  return chips + skipped;
}

function attemptDetails(attempt: AttemptView): string {
  const issues = attempt.verdicts
    .flatMap((v) => v.issues)
    .map((i) => `<li class="issue"><code>${i.code}</code> ${escapeHtml(i.message)}</li>`)
    .join("");
  const providerError = attempt.provider_error
    ? `<li class="issue"><code>PROVIDER</code> ${escapeHtml(attempt.provider_error)}</li>`
    : "";
  let repair = "";
  if (attempt.repair) {
    const hints = attempt.repair.matched_hints
      .map(
        (h) =>
          `<li class="hint">${escapeHtml(h.cause)}<br/><code>${escapeHtml(
            h.suggested_fix,
          )}</code></li>`,
      )
      .join("");
    repair = `
      <div class="repair-context">
        <span class="repair-title">repair context (failed at ${attempt.repair.failed_layer})</span>
        ${hints ? `<ul class="hints">${hints}</ul>` : ""}
      </div>`;
  }
  return `
    <li class="attempt ${attempt.accepted ? "attempt-accepted" : "attempt-failed"}"
        data-testid="attempt">
      <span class="attempt-no">attempt ${attempt.attempt}${
        attempt.epoch ? ` (resume ${attempt.epoch})` : ""
      }</span>
      ${verdictChips(attempt)}
      ${issues || providerError ? `<ul class="issues">${issues}${providerError}</ul>` : ""}
      ${repair}
    </li>`;
}

function sectionCard(view: SectionView, repairable: boolean): string {
  if (view.pruned) {
    return `
      <section class="step step-pruned" data-section="${view.section}" data-testid="step">
        <header><h3>${view.section}</h3><span class="badge badge-pruned">pruned</span></header>
        <p class="prune-reason">${escapeHtml(view.reason ?? "")}</p>
      </section>`;
  }
  const classes = ["step"];
  if (view.failing) classes.push("step-failing");
  const status = view.failing
    ? '<span class="badge badge-failing">failing</span>'
    : view.accepted_fragment !== null
      ? '<span class="badge badge-accepted">accepted</span>'
      : '<span class="badge">pending</span>';
  const attempts = view.attempts.map(attemptDetails).join("");
  const fragment = view.accepted_fragment
    ? `<pre class="fragment"><code>${escapeHtml(view.accepted_fragment)}</code></pre>`
    : "";
  const repairForm =
    view.failing && repairable
      ? `
      <div class="repair-editor">
        <textarea data-testid="repair-input" rows="4"
          placeholder="Corrected fragment for ${view.section}"></textarea>
        <button type="button" data-testid="repair-submit">Edit &amp; repair</button>
      </div>`
      : "";
  return `
    <section class="${classes.join(" ")}" data-section="${view.section}" data-testid="step">
      <header><h3>${view.section}</h3>${status}</header>
      <ol class="attempts">${attempts}</ol>
      ${fragment}
      ${repairForm}
    </section>`;
}

export function renderPipelineSteps(
  container: HTMLElement,
  data: SectionsResponse,
  options: InspectorOptions = {},
): void {
  const repairable = Boolean(options.onRepair) && data.status === "SectionExhausted";
  container.innerHTML = `
    <div class="inspector" data-testid="inspector">
      ${data.sections.map((s) => sectionCard(s, repairable)).join("")}
    </div>`;
  const button = container.querySelector<HTMLButtonElement>("[data-testid=repair-submit]");
  if (button && options.onRepair) {
    button.addEventListener("click", () => {
      const textarea = container.querySelector<HTMLTextAreaElement>("[data-testid=repair-input]")!;
      options.onRepair!(data.failed_section ?? "", textarea.value);
    });
  }
}
