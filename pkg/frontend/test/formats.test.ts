import * as fs from 'node:fs';
import * as path from 'node:path';
import { fileURLToPath } from 'node:url';
import { describe, expect, it } from 'vitest';

import {
    ParseError,
    formatFloat,
    formatMatrix,
    formatNbest,
    parseConfig,
    parseMatrix,
    parseNbest,
    parseNum,
} from '../src/formats.js';

const FIXTURES = path.join(path.dirname(fileURLToPath(import.meta.url)), 'fixtures');

function fixture(...parts: string[]): string {
    return fs.readFileSync(path.join(FIXTURES, ...parts), 'utf8');
}

describe('float crossing', () => {
    it('parses backend repr output exactly', () => {
        expect(parseNum('0.1')).toBe(0.1);
        expect(parseNum('2.9457656259530722')).toBe(2.9457656259530722);
        expect(parseNum('1e-07')).toBe(1e-7);
        expect(parseNum('inf')).toBe(Infinity);
        expect(parseNum('-inf')).toBe(-Infinity);
        expect(Number.isNaN(parseNum('nan'))).toBe(true);
    });

    it('rejects junk', () => {
        expect(() => parseNum('abc')).toThrow(ParseError);
        expect(() => parseNum('')).toThrow(ParseError);
    });

    it('round-trips doubles through shortest form', () => {
        for (const x of [0.1 + 0.2, 1 / 3, 1e-300, -0.0078125, 42, Infinity]) {
            expect(parseNum(formatFloat(x))).toBe(x);
        }
    });
});

describe('matrices', () => {
    it('parses a backend-written matrix and round-trips bit-for-bit', () => {
        const text = fixture('cases', 'linear-ab', 'logits.tsv');
        const m = parseMatrix(text);
        expect(m.symbols[0]).toBe('<b>');
        expect(m.symbols.length).toBe(4);
        expect(m.values.length).toBe(6);
        const again = parseMatrix(formatMatrix(m.values, m.symbols));
        expect(again.symbols).toEqual(m.symbols);
        for (let t = 0; t < m.values.length; t++) {
            for (let k = 0; k < m.symbols.length; k++) {
                expect(again.values[t][k]).toBe(m.values[t][k]);
            }
        }
    });

    it('rejects ragged rows', () => {
        expect(() => parseMatrix('<b>\ta\n0.5\t0.5\t0.5\n')).toThrow(/columns/);
        expect(() => parseMatrix('<b>\ta\n')).toThrow(/no frame rows/);
    });
});

describe('N-best lists', () => {
    it('groups by utterance and keeps scores exact', () => {
        const lists = parseNbest('u0\t-0.5\ta b\nu1\t-1.25\tc\nu0\t-2.0\ta\n');
        expect(lists.map((l) => l.uttId)).toEqual(['u0', 'u1']);
        expect(lists[0].hyps.length).toBe(2);
        expect(lists[0].hyps[0].tokens).toEqual(['a', 'b']);
        expect(lists[0].hyps[1].score).toBe(-2.0);
    });

    it('keeps empty hypotheses as empty token lists', () => {
        const lists = parseNbest('u0\t0\t\n');
        expect(lists[0].hyps[0].tokens).toEqual([]);
        const text = formatNbest(lists);
        expect(parseNbest(text)[0].hyps[0].tokens).toEqual([]);
    });

    it('rejects malformed lines', () => {
        expect(() => parseNbest('u0\tonly-two-fields\n')).toThrow(ParseError);
    });
});

describe('configs', () => {
    it('parses key=value with comments', () => {
        const map = parseConfig('# c\nnoise=0.4\n\nseed = 3\n');
        expect(map.get('noise')).toBe('0.4');
        expect(map.get('seed')).toBe('3');
    });

    it('rejects duplicates and junk', () => {
        expect(() => parseConfig('a=1\na=2\n')).toThrow(/duplicate/);
        expect(() => parseConfig('just words\n')).toThrow(/key=value/);
    });
});
