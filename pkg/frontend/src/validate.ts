// Client-side pre-checks mirroring the server's upload limits.

export const MAX_UPLOAD_BYTES = 10 * 1024 * 1024;
const ACCEPTED_TYPES = ['image/jpeg', 'image/png'];

export function validateFile(file: File): string | null {
    if (!ACCEPTED_TYPES.includes(file.type)) {
        return 'Accepted formats: JPG, PNG';
    }
    if (file.size > MAX_UPLOAD_BYTES) {
        return 'File exceeds the 10 MB size limit';
    }
    return null;
}
