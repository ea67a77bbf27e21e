/// <reference types="vitest/config" />
import { defineConfig } from 'vite';

export default defineConfig({
    server: {
        proxy: {
            '/api': 'http://localhost:8000',
            '/healthz': 'http://localhost:8000',
        },
    },
    build: {
        outDir: 'dist',
    },
    test: {
        environment: 'jsdom',
    },
});
