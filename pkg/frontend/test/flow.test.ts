/** End-to-end UI workflow against recorded API responses: submit a run that
 * exhausts its join section, inspect the failure, repair with an edited
 * fragment, and compare the CSV output against the baseline with zero diff. */

import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { initApp } from "../src/app.js";
import datasetsFixture from "./fixtures/datasets.json";
import exhaustedOutputs from "./fixtures/exhausted/outputs.json";
import exhaustedProgram from "./fixtures/exhausted/program.json";
import exhaustedSections from "./fixtures/exhausted/sections.json";
import exhaustedSummary from "./fixtures/exhausted/summary.json";
import modesFixture from "./fixtures/modes.json";
import repairFixture from "./fixtures/repair.json";
import repairedOutputs from "./fixtures/repaired/outputs.json";
import repairedProgram from "./fixtures/repaired/program.json";
import repairedSections from "./fixtures/repaired/sections.json";
import repairedSummary from "./fixtures/repaired/summary.json";
import submitFixture from "./fixtures/submit.json";

const RUN_ID = submitFixture.body.run_id;

/** Replays the recorded service responses; flips state on POST /repair. */
function recordedFetch() {
  const state = { repaired: false, pendingPolls: 1 };
  const respond = (body: unknown, status = 200) =>
    new Response(JSON.stringify(body), { status, headers: { "content-type": "application/json" } });

  const fetchFn = async (input: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const path = input.replace(/^https?:\/\/[^/]+/, "");
    if (path === "/api/v1/modes") return respond(modesFixture);
    if (path === "/api/v1/datasets") return respond(datasetsFixture);
    if (path === "/api/v1/runs" && method === "POST") {
      return respond(submitFixture.body, submitFixture.status_code);
    }
    if (path === `/api/v1/runs/${RUN_ID}/repair` && method === "POST") {
      state.repaired = true;
      state.pendingPolls = 1; // the repaired run reports Running once before landing
      return respond(repairFixture.body, repairFixture.status_code);
    }
    const terminal = state.repaired
      ? { summary: repairedSummary, sections: repairedSections, program: repairedProgram, outputs: repairedOutputs }
      : { summary: exhaustedSummary, sections: exhaustedSections, program: exhaustedProgram, outputs: exhaustedOutputs };
    if (path === `/api/v1/runs/${RUN_ID}`) {
      if (state.pendingPolls > 0) {
        state.pendingPolls -= 1;
        return respond({ ...terminal.summary, status: "Running" });
      }
      return respond(terminal.summary);
    }
    if (path === `/api/v1/runs/${RUN_ID}/sections`) return respond(terminal.sections);
    if (path === `/api/v1/runs/${RUN_ID}/program`) return respond(terminal.program);
    if (path === `/api/v1/runs/${RUN_ID}/outputs`) return respond(terminal.outputs);
    return respond({ detail: `unrouted ${method} ${path}` }, 404);
  };
  return { fetchFn, state };
}

async function waitFor(check: () => boolean, timeoutMs = 3000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  while (Date.now() < deadline) {
    if (check()) return;
    await new Promise((resolve) => setTimeout(resolve, 5));
  }
  throw new Error("condition not reached in time");
}

describe("submit -> inspect -> repair -> compare", () => {
  beforeEach(() => {
    document.body.innerHTML = "";
  });

  it("walks the recorded workflow to a zero-diff comparison", async () => {
    const { fetchFn } = recordedFetch();
    const client = new ApiClient("", fetchFn);
    const root = document.createElement("div");
    document.body.appendChild(root);
    await initApp(root, client, { poll: { intervalMs: 1 } });

    // submit the Boston task with the pre-loaded datasets and baseline
    root.querySelector<HTMLTextAreaElement>("[data-testid=task-input]")!.value =
      exhaustedSummary.input_content;
    root.querySelector<HTMLInputElement>("input[name=dataset][value=boston_nlcd]")!.checked = true;
    root.querySelector("form")!.dispatchEvent(new Event("submit", { cancelable: true }));

    // the run exhausts its join section; the inspector highlights it
    await waitFor(() => root.querySelector(".step-failing") !== null);
    expect(root.querySelector("[data-testid=run-status]")!.textContent).toContain(
      "SectionExhausted",
    );
    const failing = root.querySelector(".step-failing")!;
    expect(failing.getAttribute("data-section")).toBe("RasterVectorJoin");
    expect(failing.querySelectorAll("[data-testid=attempt]").length).toBe(5);

    // repair with the corrected fragment
    root.querySelector<HTMLTextAreaElement>("[data-testid=repair-input]")!.value =
      "val joined = raster.raptorJoin(vector)";
    root.querySelector<HTMLButtonElement>("[data-testid=repair-submit]")!.click();

    await waitFor(
      () => root.querySelector("[data-testid=run-status]")!.textContent!.includes("Succeeded"),
    );

    // side-by-side code shows the generated join call
    expect(root.querySelector("[data-testid=program-pane]")!.textContent).toContain("raptorJoin");

    // the CSV comparison against the baseline shows zero differences
    await waitFor(() => root.querySelector("[data-testid=diff-summary]") !== null);
    expect(root.querySelectorAll(".diff-cell").length).toBe(0);
    expect(root.querySelector("[data-testid=diff-summary]")!.textContent).toMatch(/match/i);

    // and the dominant class from the fixtures is on display in both panes
    const tables = root.querySelectorAll(".csv-table");
    expect(tables.length).toBe(2);
    for (const table of tables) {
      expect(table.textContent).toContain("Roxbury");
      expect(table.textContent).toContain("23");
    }
    expect(root.querySelector(".csv-diff")!.outerHTML).toMatchSnapshot();
  });
});
