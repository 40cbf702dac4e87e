struct Buf {
    int data[4];
    int len;
};

/*@ requires 0 <= b->len <= 4; */
void array_zero(struct Buf *b) {
    int i = 0;
    while (i < b->len) {
        b->data[i] = 0;
        i = i + 1;
    }
}
