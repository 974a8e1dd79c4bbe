// Client-side mirror of the server's intake field minima. The server stays
// authoritative; this only keeps the Next button honest and the counters live.

export const MIN_CHARS = 40;
export const MIN_WORDS = 8;

export interface FieldCheck {
  ok: boolean;
  chars: number;
  words: number;
  message: string;
}

export function checkIntakeField(raw: string): FieldCheck {
  const normalized = raw.trim().replace(/\s+/g, " ");
  const chars = normalized.length;
  const words = normalized === "" ? 0 : normalized.split(" ").length;
  const ok = chars >= MIN_CHARS && words >= MIN_WORDS;
  let message = `${chars} chars · ${words} words`;
  if (!ok) {
    const needs: string[] = [];
    if (chars < MIN_CHARS) needs.push(`${MIN_CHARS} characters`);
    if (words < MIN_WORDS) needs.push(`${MIN_WORDS} words`);
    message += ` — ${needs.join(" and ")} required`;
  }
  return { ok, chars, words, message };
}
