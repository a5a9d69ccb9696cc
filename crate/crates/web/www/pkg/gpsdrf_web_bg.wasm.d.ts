/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const coverage_study: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const fit_demo: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const weight_profile: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_export_0: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
