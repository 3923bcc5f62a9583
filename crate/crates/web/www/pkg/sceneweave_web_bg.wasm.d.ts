/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_playground_free: (a: number, b: number) => void;
export const playground_animate: (a: number, b: number, c: number) => [number, number];
export const playground_context: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const playground_drop_cube: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const playground_new: () => number;
export const playground_scene: (a: number) => [number, number];
export const playground_step: (a: number, b: number) => [number, number];
export const playground_stop: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
