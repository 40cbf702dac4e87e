struct Counter {
    int count;
    int limit;
};

/*@ requires 0 <= c->limit <= 4 && c->count == 0; */
void struct_inc(struct Counter *c) {
    /*@
      loop invariant 0 <= c->count;
    */
    while (c->count < c->limit) {
        c->count = c->count + 1;
    }
    /*@ assert c->count == c->limit; */
}
