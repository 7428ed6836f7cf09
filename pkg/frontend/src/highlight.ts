import { codePointRangeToUtf16 } from "./offsets.js";

/**
 * Render `context` into `container` with [cpStart, cpEnd) wrapped in a
 * <mark>. Text nodes only, so arbitrary context text cannot inject markup.
 */
export function renderHighlightedContext(
  container: HTMLElement,
  context: string,
  cpStart: number,
  cpEnd: number,
): void {
  const { start, end } = codePointRangeToUtf16(context, cpStart, cpEnd);
  const mark = document.createElement("mark");
  mark.className = "answer-highlight";
  mark.textContent = context.slice(start, end);
  container.replaceChildren(
    document.createTextNode(context.slice(0, start)),
    mark,
    document.createTextNode(context.slice(end)),
  );
}

export function renderPlainContext(container: HTMLElement, context: string): void {
  container.replaceChildren(document.createTextNode(context));
}

/** The highlighted substring as rendered, for fidelity checks. */
export function readHighlight(container: HTMLElement): string | null {
  const mark = container.querySelector("mark.answer-highlight");
  return mark ? mark.textContent : null;
}
