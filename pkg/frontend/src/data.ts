/**
 * Synthetic utterance generator matching the backend demo task semantics:
 * random symbol strings rendered as noisy one-hot frames with random
 * per-symbol durations. Sampling uses this package's own PRNG, so corpora
 * are reproducible here but not sample-identical to the backend's.
 */

import { Rng } from './prng.js';

export interface TaskConfig {
    alphabetSize: number;
    minLen: number;
    maxLen: number;
    minDur: number;
    maxDur: number;
    noise: number;
}

export const DEFAULT_TASK: TaskConfig = {
    alphabetSize: 8,
    minLen: 5,
    maxLen: 10,
    minDur: 4,
    maxDur: 6,
    noise: 0.4,
};

export function validateTask(task: TaskConfig): void {
    if (task.alphabetSize < 2 || task.alphabetSize > 26) {
        throw new Error('alphabet_size must be in 2..26');
    }
    if (!(task.minLen >= 1 && task.minLen <= task.maxLen)) {
        throw new Error('bad label length range');
    }
    if (!(task.minDur >= 1 && task.minDur <= task.maxDur)) {
        throw new Error('bad duration range');
    }
    if (task.noise < 0) throw new Error('noise must be >= 0');
}

/** non-blank tokens; symbol k maps to tokens[k - 1] */
export function taskTokens(task: TaskConfig): string[] {
    return Array.from({ length: task.alphabetSize },
                      (_, i) => String.fromCharCode(97 + i));
}

export interface Utterance {
    uttId: string;
    /** frames x alphabetSize */
    features: number[][];
    /** 1-based symbol indices, blank excluded */
    labels: number[];
}

export function uttTokens(u: Utterance, tokens: string[]): string[] {
    return u.labels.map((k) => tokens[k - 1]);
}

export function generateDataset(task: TaskConfig, nUtts: number, seed: number,
                                prefix = 'utt'): Utterance[] {
    validateTask(task);
    if (nUtts < 1) throw new Error('nUtts must be >= 1');
    const rng = new Rng(seed);
    const utts: Utterance[] = [];
    for (let u = 0; u < nUtts; u++) {
        const length = rng.int(task.minLen, task.maxLen);
        const labels: number[] = [];
        const features: number[][] = [];
        for (let i = 0; i < length; i++) {
            const label = rng.int(1, task.alphabetSize);
            labels.push(label);
            const dur = rng.int(task.minDur, task.maxDur);
            for (let d = 0; d < dur; d++) {
                const row = new Array<number>(task.alphabetSize);
                for (let k = 0; k < task.alphabetSize; k++) {
                    row[k] = (k === label - 1 ? 1 : 0) + task.noise * rng.normal();
                }
                features.push(row);
            }
        }
        utts.push({ uttId: `${prefix}${String(u).padStart(4, '0')}`, features, labels });
    }
    return utts;
}
