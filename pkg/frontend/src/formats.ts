/**
 * Text formats shared with the backend command-line tools: posterior/logit
 * matrices, N-best lists, alphabets, references, and key=value configs.
 *
 * Floats are written in shortest round-trip form (JS `String`) and parsed
 * with `Number`; both sides of the bridge use correctly rounded conversions,
 * so a value survives the text crossing bit-for-bit in either direction.
 */

export class ParseError extends Error {
    constructor(public file: string, public line: number, detail: string) {
        super(`${file}:${line}: ${detail}`);
        this.name = 'ParseError';
    }
}

export const BLANK_TOKEN = '<b>';

export function formatFloat(x: number): string {
    if (Number.isNaN(x)) return 'nan';
    if (x === Infinity) return 'inf';
    if (x === -Infinity) return '-inf';
    return String(x);
}

export function parseNum(s: string, file = '<text>', line = 0): number {
    const t = s.trim();
    if (t === 'inf') return Infinity;
    if (t === '-inf') return -Infinity;
    if (t === 'nan') return NaN;
    if (t === '') throw new ParseError(file, line, 'empty number field');
    const x = Number(t);
    if (Number.isNaN(x)) throw new ParseError(file, line, `bad number ${JSON.stringify(s)}`);
    return x;
}

// -- posterior / logit matrices ----------------------------------------------

export interface Matrix {
    /** column symbols; index 0 is the blank marker */
    symbols: string[];
    values: number[][];
}

export function formatMatrix(values: number[][], symbols: string[]): string {
    const rows = [symbols.join('\t')];
    for (const row of values) {
        rows.push(row.map(formatFloat).join('\t'));
    }
    return rows.join('\n') + '\n';
}

export function parseMatrix(text: string, file = '<matrix>'): Matrix {
    const lines = text.split('\n');
    if (!lines.length || !lines[0].trim()) {
        throw new ParseError(file, 0, 'missing alphabet header row');
    }
    const symbols = lines[0].split('\t');
    const values: number[][] = [];
    for (let i = 1; i < lines.length; i++) {
        if (!lines[i].trim()) continue;
        const fields = lines[i].split('\t');
        if (fields.length !== symbols.length) {
            throw new ParseError(file, i + 1,
                `expected ${symbols.length} columns, got ${fields.length}`);
        }
        values.push(fields.map((f) => parseNum(f, file, i + 1)));
    }
    if (!values.length) throw new ParseError(file, 0, 'matrix has no frame rows');
    return { symbols, values };
}

// -- N-best lists --------------------------------------------------------------

export interface Hyp {
    tokens: string[];
    score: number;
}

export interface NBest {
    uttId: string;
    hyps: Hyp[];
}

export function formatNbest(lists: NBest[]): string {
    const out: string[] = [];
    for (const nb of lists) {
        for (const h of nb.hyps) {
            out.push(`${nb.uttId}\t${formatFloat(h.score)}\t${h.tokens.join(' ')}`);
        }
    }
    return out.join('\n') + '\n';
}

export function parseNbest(text: string, file = '<nbest>'): NBest[] {
    const grouped = new Map<string, Hyp[]>();
    const lines = text.split('\n');
    for (let i = 0; i < lines.length; i++) {
        if (!lines[i].trim()) continue;
        const fields = lines[i].split('\t');
        if (fields.length !== 3) {
            throw new ParseError(file, i + 1, 'expected <utt_id>\\t<score>\\t<tokens>');
        }
        const [utt, scoreS, tokS] = fields;
        const hyp = {
            tokens: tokS.split(' ').filter((t) => t.length > 0),
            score: parseNum(scoreS, file, i + 1),
        };
        const bucket = grouped.get(utt);
        if (bucket) bucket.push(hyp);
        else grouped.set(utt, [hyp]);
    }
    if (!grouped.size) throw new ParseError(file, 0, 'no hypotheses');
    return [...grouped.entries()].map(([uttId, hyps]) => ({ uttId, hyps }));
}

// -- alphabets and references ---------------------------------------------------

/** Alphabet files list the non-blank tokens; the matrix header adds the blank. */
export function formatAlphabet(tokens: string[]): string {
    return tokens.join('\n') + '\n';
}

export function parseAlphabet(text: string): string[] {
    return text.split('\n').map((l) => l.trim()).filter((l) => l.length > 0);
}

export function formatRefs(refs: [string, string[]][]): string {
    return refs.map(([utt, tokens]) => `${utt}\t${tokens.join(' ')}`).join('\n') + '\n';
}

export function parseRefs(text: string, file = '<refs>'): [string, string[]][] {
    const out: [string, string[]][] = [];
    const lines = text.split('\n');
    for (let i = 0; i < lines.length; i++) {
        if (!lines[i].trim()) continue;
        const fields = lines[i].split('\t');
        if (fields.length !== 2) {
            throw new ParseError(file, i + 1, 'expected <utt_id>\\t<tokens>');
        }
        out.push([fields[0], fields[1].split(' ').filter((t) => t.length > 0)]);
    }
    if (!out.length) throw new ParseError(file, 0, 'no references');
    return out;
}

// -- flat key=value configs ------------------------------------------------------

export function parseConfig(text: string, file = '<config>'): Map<string, string> {
    const out = new Map<string, string>();
    const lines = text.split('\n');
    for (let i = 0; i < lines.length; i++) {
        const line = lines[i].trim();
        if (!line || line.startsWith('#')) continue;
        const eq = line.indexOf('=');
        if (eq < 0) {
            throw new ParseError(file, i + 1, `expected key=value, got ${JSON.stringify(line)}`);
        }
        const key = line.slice(0, eq).trim();
        if (!key) throw new ParseError(file, i + 1, 'empty key');
        if (out.has(key)) throw new ParseError(file, i + 1, `duplicate key ${JSON.stringify(key)}`);
        out.set(key, line.slice(eq + 1).trim());
    }
    return out;
}
