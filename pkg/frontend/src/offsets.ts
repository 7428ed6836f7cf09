/**
 * Code-point to UTF-16 index conversion.
 *
 * The service reports answer spans as Unicode code-point offsets; JavaScript
 * strings index UTF-16 units, which disagree as soon as the text contains
 * astral-plane characters. Every boundary conversion in the console happens
 * here and nowhere else.
 */

/** UTF-16 index of the code-point boundary `cpIndex` in `text`. */
export function codePointToUtf16Index(text: string, cpIndex: number): number {
  if (!Number.isInteger(cpIndex) || cpIndex < 0) {
    throw new RangeError(`invalid code point index ${cpIndex}`);
  }
  let cp = 0;
  let u16 = 0;
  for (const ch of text) {
    if (cp === cpIndex) {
      return u16;
    }
    cp += 1;
    u16 += ch.length;
  }
  if (cp === cpIndex) {
    return u16; // end-of-string boundary
  }
  throw new RangeError(`code point index ${cpIndex} beyond text of ${cp} code points`);
}

export interface Utf16Range {
  readonly start: number;
  readonly end: number;
}

/** UTF-16 range for the half-open code-point range [cpStart, cpEnd). */
export function codePointRangeToUtf16(text: string, cpStart: number, cpEnd: number): Utf16Range {
  if (cpEnd < cpStart) {
    throw new RangeError(`empty or inverted span (${cpStart}, ${cpEnd})`);
  }
  return {
    start: codePointToUtf16Index(text, cpStart),
    end: codePointToUtf16Index(text, cpEnd),
  };
}

/** Slice `text` by code-point offsets (the service's span coordinates). */
export function sliceByCodePoints(text: string, cpStart: number, cpEnd: number): string {
  const range = codePointRangeToUtf16(text, cpStart, cpEnd);
  return text.slice(range.start, range.end);
}
