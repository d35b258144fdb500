/** Single-page wiring: setup panel -> submit -> poll -> side-by-side code,
 * pipeline inspector with edit-and-repair, and split result comparison. */

import { ApiClient, pollRun, type PollOptions } from "./api.js";
import { renderCodePanes } from "./codePanes.js";
import { renderCsvDiff, renderImageCompare } from "./compare.js";
import { renderPipelineSteps } from "./inspector.js";
import { renderSetupPanel } from "./setupPanel.js";
import type { OutputsResponse, RunSummary } from "./types.js";

export interface AppOptions {
  poll?: PollOptions;
}

export async function initApp(
  root: HTMLElement,
  client: ApiClient,
  options: AppOptions = {},
): Promise<void> {
  root.innerHTML = `
    <main class="app">
      <h1>grail translation console</h1>
      <section id="setup"></section>
      <section id="status" data-testid="run-status" hidden></section>
      <section id="code"></section>
      <section id="inspector"></section>
      <section id="compare"></section>
    </main>`;
  const setupEl = root.querySelector<HTMLElement>("#setup")!;
  const statusEl = root.querySelector<HTMLElement>("#status")!;
  const codeEl = root.querySelector<HTMLElement>("#code")!;
  const inspectorEl = root.querySelector<HTMLElement>("#inspector")!;
  const compareEl = root.querySelector<HTMLElement>("#compare")!;

  function showStatus(summary: RunSummary): void {
    statusEl.hidden = false;
    const extra =
      summary.status === "SectionExhausted" && summary.failed_section
        ? ` — failing section: ${summary.failed_section}`
        : "";
    statusEl.innerHTML = `<span class="status status-${summary.status.toLowerCase()}">${
      summary.status
    }</span>${extra}`;
  }

  function renderComparison(outputs: OutputsResponse): void {
    compareEl.innerHTML = "";
    const csv = outputs.outputs.find((o) => o.rows !== null);
    if (csv && csv.rows) {
      const host = document.createElement("div");
      compareEl.appendChild(host);
      if (outputs.baseline?.rows) {
        renderCsvDiff(host, outputs.baseline.rows, csv.rows, outputs.baseline.name, csv.name);
      } else {
        renderCsvDiff(host, csv.rows, csv.rows, "generated", "generated");
      }
    }
    const image = outputs.outputs.find((o) => o.content_type === "image/tiff");
    if (image && outputs.baseline && outputs.baseline.content_type === "image/tiff") {
      const host = document.createElement("div");
      compareEl.appendChild(host);
      renderImageCompare(host, outputs.baseline.href ?? "", image.href);
    }
  }

  async function renderRun(runId: string, summary: RunSummary): Promise<void> {
    const [sections, program, outputs] = await Promise.all([
      client.sections(runId),
      client.program(runId),
      client.outputs(runId),
    ]);
    const sourceTitle = summary.input_form === "script" ? "source script" : "task description";
    const left = summary.intermediate_script ?? summary.input_content ?? "";
    renderCodePanes(
      codeEl,
      summary.intermediate_script ? "intermediate reference script" : sourceTitle,
      left,
      "generated program",
      program.program ?? "(no program assembled)",
    );
    renderPipelineSteps(inspectorEl, sections, {
      onRepair: async (section, fragment) => {
        statusEl.innerHTML = '<span class="status status-running">Repairing…</span>';
        await client.repair(runId, { edited_fragment: fragment || undefined });
        await showRun(runId);
      },
    });
    renderComparison(outputs);
  }

  async function showRun(runId: string): Promise<void> {
    const summary = await pollRun(client, runId, { ...options.poll, onUpdate: showStatus });
    showStatus(summary);
    await renderRun(runId, summary);
  }

  const [modes, datasets] = await Promise.all([client.modes(), client.datasets()]);
  renderSetupPanel(setupEl, {
    modes: modes.modes,
    defaultTextMode: modes.default_text_mode,
    defaultScriptMode: modes.default_script_mode,
    datasets: datasets.datasets,
    baselines: datasets.baselines,
    onSubmit: async (submission) => {
      statusEl.hidden = false;
      statusEl.innerHTML = '<span class="status status-running">Running…</span>';
      try {
        const { run_id } = await client.submitRun(submission);
        await showRun(run_id);
      } catch (error) {
        statusEl.innerHTML = `<span class="status status-error">${String(error)}</span>`;
      }
    },
  });
}

declare global {
  interface Window {
    GRAIL_API_BASE?: string;
  }
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) {
    const base = window.GRAIL_API_BASE ?? "http://127.0.0.1:8733";
    void initApp(root, new ApiClient(base));
  }
}
