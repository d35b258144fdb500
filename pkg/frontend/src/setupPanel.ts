/** Setup panel: task input (text or script), mode and dataset selection. */

import type { DatasetInfo } from "./types.js";

export interface SetupSubmission {
  input: string;
  input_form: string;
  mode: string;
  datasets: string[];
  baseline?: string;
}

export interface SetupOptions {
  modes: string[];
  defaultTextMode: string;
  defaultScriptMode: string;
  datasets: DatasetInfo[];
  baselines?: string[];
  onSubmit: (submission: SetupSubmission) => void;
}

export function renderSetupPanel(container: HTMLElement, options: SetupOptions): void {
  container.innerHTML = `
    <form class="setup-panel" data-testid="setup-form">
      <label class="setup-label">Task
        <textarea data-testid="task-input" rows="5"
          placeholder="Describe the task, or paste a Python script"></textarea>
      </label>
      <div class="setup-row">
        <label>Input
          <select data-testid="form-select">
            <option value="text" selected>description</option>
            <option value="script">script</option>
          </select>
        </label>
        <label>Mode
          <select data-testid="mode-select">
            <option value="">auto</option>
            ${options.modes.map((m) => `<option value="${m}">${m}</option>`).join("")}
          </select>
        </label>
      </div>
      <fieldset class="setup-datasets">
        <legend>Datasets</legend>
        ${options.datasets
          .map(
            (d) => `
          <label class="dataset-option">
            <input type="checkbox" name="dataset" value="${d.name}" />
            ${d.name}${d.role ? ` <span class="dataset-role">(${d.role})</span>` : ""}
          </label>`,
          )
          .join("")}
      </fieldset>
      ${
        options.baselines && options.baselines.length
          ? `<label>Baseline
               <select data-testid="baseline-select">
                 <option value="">none</option>
                 ${options.baselines.map((b) => `<option value="${b}">${b}</option>`).join("")}
               </select>
             </label>`
          : ""
      }
      <div class="setup-actions">
        <button type="submit" data-testid="submit-run">Translate</button>
        <span class="setup-error" data-testid="setup-error" hidden></span>
      </div>
    </form>
  `;

  const form = container.querySelector<HTMLFormElement>("[data-testid=setup-form]")!;
  const input = container.querySelector<HTMLTextAreaElement>("[data-testid=task-input]")!;
  const formSelect = container.querySelector<HTMLSelectElement>("[data-testid=form-select]")!;
  const modeSelect = container.querySelector<HTMLSelectElement>("[data-testid=mode-select]")!;
  const baselineSelect = container.querySelector<HTMLSelectElement>("[data-testid=baseline-select]");
  const error = container.querySelector<HTMLElement>("[data-testid=setup-error]")!;

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value.trim();
    if (!text) {
      error.textContent = "Enter a task description or script first.";
      error.hidden = false;
      return;
    }
    error.hidden = true;
    const inputForm = formSelect.value;
    const mode =
      modeSelect.value ||
      (inputForm === "script" ? options.defaultScriptMode : options.defaultTextMode);
    const datasets = Array.from(
      container.querySelectorAll<HTMLInputElement>("input[name=dataset]:checked"),
    ).map((el) => el.value);
    const submission: SetupSubmission = { input: text, input_form: inputForm, mode, datasets };
    if (baselineSelect && baselineSelect.value) submission.baseline = baselineSelect.value;
    options.onSubmit(submission);
  });
}
