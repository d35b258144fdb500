/** Side-by-side code panes: the original input on the left, the generated
 * program on the right. */

function escapeHtml(text: string): string {
  return text.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function renderCodePanes(
  container: HTMLElement,
  leftTitle: string,
  leftText: string,
  rightTitle: string,
  rightText: string,
): void {
  container.innerHTML = `
    <div class="code-panes" data-testid="code-panes">
      <div class="code-pane">
        <h4>${escapeHtml(leftTitle)}</h4>
        <pre data-testid="source-pane"><code>${escapeHtml(leftText)}</code></pre>
      </div>
      <div class="code-pane">
        <h4>${escapeHtml(rightTitle)}</h4>
        <pre data-testid="program-pane"><code>${escapeHtml(rightText)}</code></pre>
      </div>
    </div>`;
}
