/** Shared rendering helpers: HTML escaping and verbatim number text. */

export function esc(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/**
 * Verbatim numeric text.  JSON numbers round-trip through the shortest
 * IEEE-754 representation on both sides, so String(value) reproduces the
 * API's decimal text exactly; nothing is rounded for display.
 */
export function num(value: number): string {
  return String(value);
}

export function deltaText(delta: number): string {
  if (delta === 0) return '0';
  return (delta > 0 ? '+' : '') + String(delta);
}

export function errorBanner(error: {
  code: string;
  message: string;
  correlation_id: string;
}): string {
  return (
    `<div class="banner error" data-correlation-id="${esc(error.correlation_id)}">` +
    `API error <code>${esc(error.code)}</code>: ${esc(error.message)} ` +
    `<span class="correlation">correlation ${esc(error.correlation_id)}</span>` +
    `</div>`
  );
}
